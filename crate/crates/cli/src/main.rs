fn main() {
    std::process::exit(bsdelab_cli::main_with(std::env::args_os()));
}
