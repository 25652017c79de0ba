fn main() {
    std::process::exit(edgeloop_cli::run(std::env::args_os()));
}
