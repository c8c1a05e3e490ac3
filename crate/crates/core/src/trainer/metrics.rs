use std::io::{self, Write};

use super::TrainRecord;

pub const METRICS_HEADER: &str = "epoch,loss,r_perp,r_par,r,j,acc_train,acc_biased,acc_unbiased,skipped_frac";

/// One row per record, six decimals; accuracies not measured in an epoch are written as `nan`.
pub fn write_metrics_csv(records: &[TrainRecord], out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in records {
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"));
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{:.6}",
            r.epoch,
            r.loss,
            r.r_perp,
            r.r_par,
            r.r,
            r.j,
            r.acc_train,
            opt(r.acc_biased),
            opt(r.acc_unbiased),
            r.skipped_frac
        )?;
    }
    Ok(())
}

pub fn metrics_csv(records: &[TrainRecord]) -> String {
    let mut buf = Vec::new();
    write_metrics_csv(records, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii output")
}
