fn main() { std::process::exit(saddlenode::run_cli_placeholder()); }
