fn main() {
    std::process::exit(qubo_suppress::cli::run(std::env::args_os()));
}
