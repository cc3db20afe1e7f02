fn main() {
    std::process::exit(segrestore::cli::run_cli(std::env::args_os()));
}
