fn main() {
    std::process::exit(ratiosparse::cli::run(std::env::args_os()));
}
