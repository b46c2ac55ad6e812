// The calibration-bias sweep on a hand-written score matrix: every bias
// interval between prediction flips becomes one point of the seen/unseen
// accuracy curve, which yields S, U, HM and AUC.

use lpr::eval::{bias_sweep, metrics, ScoreMatrix};

pub fn run_example() -> lpr::Result<()> {
    // Columns 0 and 1 are seen compositions, 2 and 3 unseen.
    let m = ScoreMatrix::from_rows(
        &[
            [0.9, 0.1, 0.6, 0.2],
            [0.3, 0.7, 0.1, 0.5],
            [0.4, 0.2, 0.3, 0.8],
            [0.6, 0.3, 0.2, 0.7],
            [0.2, 0.5, 0.45, 0.1],
        ],
        vec![0, 0, 3, 3, 2],
        vec![true, true, false, false],
    )?;
    println!("margins (best seen - best unseen): {:?}", m.margins());
    let curve = bias_sweep(&m)?;
    println!("{:>8} {:>6} {:>6}", "bias", "seen", "unseen");
    for p in &curve {
        println!("{:>8.3} {:>6.3} {:>6.3}", p.bias, p.seen, p.unseen);
    }
    let mt = metrics(&curve);
    println!("S {:.1}  U {:.1}  HM {:.1}  AUC {:.1}", mt.seen, mt.unseen, mt.hm, mt.auc);
    Ok(())
}

#[allow(dead_code)]
fn main() -> lpr::Result<()> {
    run_example()
}
