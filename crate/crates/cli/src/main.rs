fn main() {
    std::process::exit(clusterlab_cli::main_with(std::env::args_os()));
}
