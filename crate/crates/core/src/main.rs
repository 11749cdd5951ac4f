fn main() {
    std::process::exit(fmftrack::cli::run(std::env::args()));
}
