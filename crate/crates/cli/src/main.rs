fn main() {
    std::process::exit(equilab_cli::run());
}
