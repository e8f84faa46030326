fn main() {
    std::process::exit(netinvest::cli::run(std::env::args_os()));
}
