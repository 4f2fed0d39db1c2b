fn main() {
    std::process::exit(tilesynth::run(std::env::args_os()));
}
