fn main() {
    std::process::exit(newsvendor_games::cli::run(std::env::args_os()));
}
