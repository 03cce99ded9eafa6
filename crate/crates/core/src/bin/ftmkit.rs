fn main() {
    std::process::exit(ftmkit::cli::run(std::env::args().collect()));
}
