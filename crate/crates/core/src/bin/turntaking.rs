fn main() {
    std::process::exit(turntaking::cli::run(std::env::args_os()));
}
