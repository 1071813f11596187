fn main() { println!("{}", melres::dsp::placeholder()); }
