fn main() {
    println!("dyadic-lp");
}
