fn main() {
    std::process::exit(nuisfim_cli::run(std::env::args_os()));
}
