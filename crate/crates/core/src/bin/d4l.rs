fn main() {
    std::process::exit(d4l::cli::run(std::env::args_os()));
}
