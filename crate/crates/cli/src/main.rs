fn main() {
    std::process::exit(equigame_cli::run_from_args(std::env::args_os()));
}
