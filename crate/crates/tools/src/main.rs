fn main() {
    std::process::exit(expectile_tools::cli::run(std::env::args().collect()));
}
