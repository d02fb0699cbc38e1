fn main() {
    std::process::exit(nldisp::cli::run(std::env::args_os()));
}
