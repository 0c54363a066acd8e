fn main() {
    std::process::exit(evoroute_cli::run(std::env::args_os()));
}
