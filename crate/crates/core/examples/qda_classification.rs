//! Robust QDA trained and evaluated on heavy-tailed two-class data.

use hrstat::qda::{hrqda_train, metrics, ConfusionCounts, QdaConfig};
use hrstat::sim::generate::{gen_elliptical, DistSpec};
use hrstat::sim::models::{make_qda_cov, QdaCovModel};
use nalgebra::DVector;

fn main() -> hrstat::Result<()> {
    let (n, p) = (100, 60);
    let (c1, c2) = make_qda_cov(QdaCovModel::QIII, p)?;
    let spec = DistSpec::student_t3();
    let mu1 = DVector::zeros(p);
    let mu2 = DVector::from_element(p, 0.1);

    let train1 = gen_elliptical(&spec, &mu1, &c1.sigma, n, 1)?;
    let train2 = gen_elliptical(&spec, &mu2, &c2.sigma, n, 2)?;
    let test1 = gen_elliptical(&spec, &mu1, &c1.sigma, n, 3)?;
    let test2 = gen_elliptical(&spec, &mu2, &c2.sigma, n, 4)?;

    let rule = hrqda_train(&train1, &train2, &QdaConfig::default())?;
    println!("c_hat {:.2}  log-det ratio {:.3}", rule.c_hat, rule.logdet_ratio);
    for fit in &rule.train_diag {
        println!("  class fit: n {} iterations {} trace_hat {:.4}", fit.n, fit.iterations, fit.trace_hat);
    }

    let mut truth = vec![1u8; n];
    truth.extend(vec![2u8; n]);
    let mut pred = rule.predict(&test1)?;
    pred.extend(rule.predict(&test2)?);
    let counts = ConfusionCounts::from_labels(&truth, &pred)?;
    let m = metrics(&counts)?;
    println!("{counts:?}");
    println!("acc {:.3} spec {:.3} sens {:.3} mcc {:.3}", m.acc, m.spec, m.sens, m.mcc);

    let doc = serde_json::to_string(&rule.to_doc())?;
    println!("serialized model: {} bytes", doc.len());
    Ok(())
}
