fn main() {
    std::process::exit(dehaze::cli::run(std::env::args_os()));
}
