fn main() {
    std::process::exit(fairface::cli::run(std::env::args_os()));
}
