fn main() {
    std::process::exit(normguide_cli::run(std::env::args_os()));
}
