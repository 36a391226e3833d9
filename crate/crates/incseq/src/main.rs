fn main() {
    std::process::exit(incseq::cli::run())
}
