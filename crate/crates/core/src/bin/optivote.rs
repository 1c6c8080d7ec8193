fn main() {
    let args: Vec<String> = std::env::args().collect();
    let stdout = std::io::stdout();
    let code = optivote::cli::main_with(&args, &mut stdout.lock());
    std::process::exit(code);
}
