//! CSV in, gene screening, HRQDA, metrics out.
//!
//! A synthetic expression-like table stands in for a real data file: two
//! groups of unequal size, a few hundred columns of which only some carry a
//! shift.

use std::io::Cursor;

use hrstat::io::{read_csv, screen_genes, split_by_label, write_csv};
use hrstat::qda::{hrqda_train, metrics, ConfusionCounts, QdaConfig};
use hrstat::sim::generate::{gen_elliptical, DistSpec};
use hrstat::linalg::SpdMatrix;
use nalgebra::{DMatrix, DVector};

fn main() -> hrstat::Result<()> {
    let (n1, n2, p) = (98, 50, 297);
    let mut shift = DVector::zeros(p);
    for j in 0..40 {
        shift[j] = 1.0;
    }
    let a = gen_elliptical(&DistSpec::student_t3(), &DVector::zeros(p), &SpdMatrix::identity(p), n1, 5)?;
    let b = gen_elliptical(&DistSpec::student_t3(), &shift, &SpdMatrix::identity(p), n2, 6)?;

    // one table with the label in the last column, round-tripped through CSV
    let mut table = DMatrix::zeros(n1 + n2, p + 1);
    table.view_mut((0, 0), (n1, p)).copy_from(&a);
    table.view_mut((n1, 0), (n2, p)).copy_from(&b);
    for i in 0..n1 + n2 {
        table[(i, p)] = if i < n1 { 1.0 } else { 2.0 };
    }
    let mut buf = Vec::new();
    write_csv(&table, &mut buf)?;
    let data = read_csv(Cursor::new(buf), false, true)?;
    let labels = data.labels.expect("label column");

    let (x1, x2) = split_by_label(&data.x, &labels)?;
    let screen = screen_genes(&x1, &x2, 0.01)?;
    println!("kept {} of {p} columns", screen.kept.len());
    let x = data.x.select_columns(screen.kept.iter());
    let (x1, x2) = split_by_label(&x, &labels)?;

    let rule = hrqda_train(&x1, &x2, &QdaConfig::default())?;
    let pred = rule.predict(&x)?;
    let m = metrics(&ConfusionCounts::from_labels(&labels, &pred)?)?;
    println!("training acc {:.3} spec {:.3} sens {:.3} mcc {:.3}", m.acc, m.spec, m.sens, m.mcc);
    Ok(())
}
