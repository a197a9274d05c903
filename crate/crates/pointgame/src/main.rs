fn main() {
    std::process::exit(pointgame::cli::run(std::env::args_os()));
}
