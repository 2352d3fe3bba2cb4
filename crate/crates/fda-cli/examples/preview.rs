fn main() {
    let (pixels, labels) = fda_cli::synth::generate_gray(40, 28, 9);
    // print one sample of each digit 0-9
    let mut shown = [false; 10];
    for (i, &label) in labels.iter().enumerate() {
        let l = label as usize;
        if shown[l] { continue; }
        shown[l] = true;
        println!("--- digit {l} ---");
        let img = &pixels[i*784..(i+1)*784];
        for r in 0..28 {
            let line: String = (0..28).map(|c| {
                match img[r*28+c] { 0..=50 => ' ', 51..=120 => '.', 121..=200 => 'o', _ => '#' }
            }).collect();
            println!("{line}");
        }
    }
}
