fn main() {
    let code = hexmap_cli::run(std::env::args_os(), &mut std::io::stderr());
    std::process::exit(code);
}
