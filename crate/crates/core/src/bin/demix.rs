fn main() {
    std::process::exit(demix::cli::run(std::env::args_os()));
}
