fn main() {
    std::process::exit(ncmax::cli::run(std::env::args_os()));
}
