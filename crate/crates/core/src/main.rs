fn main() {
    std::process::exit(hdtwosample::cli::run(std::env::args_os()));
}
