fn main() {
    eprintln!("kinlab: not wired up yet");
    std::process::exit(2);
}
