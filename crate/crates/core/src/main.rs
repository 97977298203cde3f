fn main() {
    std::process::exit(voxtherm::cli_main(std::env::args_os()));
}
