fn main() {
    std::process::exit(tollgrid::cli::run(std::env::args_os()));
}
