fn main() {
    std::process::exit(auction_ewa::cli::run(std::env::args_os()));
}
