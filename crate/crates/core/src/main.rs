fn main() {
    std::process::exit(minimax_lab::cli::main(std::env::args_os()));
}
