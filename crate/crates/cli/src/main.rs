fn main() {
    std::process::exit(mstat::commands::main_with(std::env::args_os()));
}
