fn main() {
    std::process::exit(cortexforge::cli::run(std::env::args_os()));
}
