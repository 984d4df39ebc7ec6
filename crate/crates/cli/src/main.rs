fn main() {
    std::process::exit(claim_match_cli::run(std::env::args_os()));
}
