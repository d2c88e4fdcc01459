fn main() {
    std::process::exit(dyadsim_cli::main_with_args(std::env::args_os()));
}
