fn main() {
    std::process::exit(prsm::cli::run(std::env::args_os()));
}
