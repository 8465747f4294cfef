fn main() {
    std::process::exit(acontrario::cli::run(std::env::args_os()));
}
