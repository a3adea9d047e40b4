fn main() {
    std::process::exit(bbqram::cli::parse_and_run(std::env::args()));
}
