fn main() {
    std::process::exit(kawasaki_dpp::cli::run(std::env::args_os()));
}
