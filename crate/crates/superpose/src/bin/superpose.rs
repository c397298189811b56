fn main() {
    std::process::exit(superpose::cli::cli_main(std::env::args().collect()));
}
