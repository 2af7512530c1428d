fn main() {
    std::process::exit(parabolic_lab::cli::run(std::env::args_os()));
}
