//! Human-readable outputs: Markdown metric tables, per-class CSV and PPM class maps.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::raster::{ClassTable, LabelRaster, NODATA};

/// Half-up rounding to two decimals, e.g. `0.005 → "0.01"`.
pub fn round2(v: f64) -> String {
    // the epsilon keeps values like 0.125 (0.12499.. in binary) rounding up
    format!("{:.2}", ((v * 100.0 + 0.5 + 1e-9).floor() / 100.0))
}

pub struct TableRow<'a> {
    pub model: &'a str,
    pub split: &'a str,
    pub report: &'a MetricsReport,
}

/// One Markdown row per model with ACC, J and F1 columns for each split, in
/// order of first appearance. Missing model/split pairs render as `-`.
pub fn metrics_table(rows: &[TableRow<'_>]) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut splits: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model) {
            models.push(r.model);
        }
        if !splits.contains(&r.split) {
            splits.push(r.split);
        }
    }
    let mut out = String::from("| Model |");
    for s in &splits {
        out += &format!(" {s} ACC | {s} J | {s} F1 |");
    }
    out += "\n|---|";
    out += &"---:|".repeat(3 * splits.len());
    out += "\n";
    for m in &models {
        out += &format!("| {m} |");
        for s in &splits {
            match rows.iter().find(|r| r.model == *m && r.split == *s) {
                Some(r) => {
                    let rep = r.report;
                    out += &format!(
                        " {} | {} | {} |",
                        round2(rep.accuracy),
                        round2(rep.macro_jaccard),
                        round2(rep.macro_f1)
                    );
                }
                None => out += " - | - | - |",
            }
        }
        out += "\n";
    }
    out
}

/// Parsed cell of a metrics table: (model, split, [ACC, J, F1]).
pub type TableCell = (String, String, [f64; 3]);

/// Inverse of [`metrics_table`]; missing cells are skipped.
pub fn parse_metrics_table(text: &str) -> Result<Vec<TableCell>> {
    let split_row = |l: &str| -> Vec<String> {
        l.trim()
            .trim_matches('|')
            .split('|')
            .map(|c| c.trim().to_owned())
            .collect()
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = split_row(lines.next().ok_or_else(|| Error::Format("empty table".into()))?);
    if header.first().map(String::as_str) != Some("Model") || (header.len() - 1) % 3 != 0 {
        return Err(Error::Format("not a metrics table header".into()));
    }
    let splits: Vec<String> = header[1..]
        .chunks(3)
        .map(|c| c[0].strip_suffix(" ACC").map(str::to_owned))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Format("metric columns must start with '<split> ACC'".into()))?;
    lines.next();
    let mut out = Vec::new();
    for line in lines {
        let cells = split_row(line);
        if cells.len() != header.len() {
            return Err(Error::Format(format!(
                "row has {} cells, header {}",
                cells.len(),
                header.len()
            )));
        }
        for (s, vals) in splits.iter().zip(cells[1..].chunks(3)) {
            if vals[0] == "-" {
                continue;
            }
            let mut v = [0.0; 3];
            for (slot, text) in v.iter_mut().zip(vals) {
                *slot = text
                    .parse()
                    .map_err(|e| Error::Format(format!("bad value {text:?}: {e}")))?;
            }
            out.push((cells[0].clone(), s.clone(), v));
        }
    }
    Ok(out)
}

/// `class_id,name,support,precision,recall,f1,jaccard` with 4-decimal values.
pub fn per_class_csv(report: &MetricsReport, table: &ClassTable) -> Result<String> {
    if report.per_class.len() != table.len() {
        return Err(Error::Shape(format!(
            "report has {} classes, class table {}",
            report.per_class.len(),
            table.len()
        )));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class_id", "name", "support", "precision", "recall", "f1", "jaccard"])?;
    for (e, m) in table.entries().iter().zip(&report.per_class) {
        w.write_record([
            e.class_id.to_string(),
            e.name.clone(),
            m.support.to_string(),
            format!("{:.4}", m.precision),
            format!("{:.4}", m.recall),
            format!("{:.4}", m.f1),
            format!("{:.4}", m.jaccard),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub type Rgb = [u8; 3];

/// Class colors; nodata always renders black.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Palette {
    colors: BTreeMap<u16, Rgb>,
}

const BASE_COLORS: [Rgb; 12] = [
    [70, 107, 159],
    [209, 222, 248],
    [179, 172, 159],
    [104, 171, 95],
    [28, 95, 44],
    [181, 197, 143],
    [204, 184, 121],
    [223, 223, 194],
    [220, 217, 57],
    [171, 0, 0],
    [235, 0, 0],
    [108, 159, 184],
];

impl Palette {
    pub fn new(colors: BTreeMap<u16, Rgb>) -> Self {
        Self { colors }
    }

    pub fn get(&self, class_id: u16) -> Option<Rgb> {
        self.colors.get(&class_id).copied()
    }

    /// Distinct non-black colors for every class in `table`.
    pub fn for_table(table: &ClassTable) -> Self {
        let mut used = vec![[0u8; 3]];
        let mut colors = BTreeMap::new();
        for (i, id) in table.ids().into_iter().enumerate() {
            let mut k = i as u32;
            let mut c = *BASE_COLORS.get(i).unwrap_or(&hash_color(k));
            while used.contains(&c) {
                k = k.wrapping_add(BASE_COLORS.len() as u32);
                c = hash_color(k);
            }
            used.push(c);
            colors.insert(id, c);
        }
        Self { colors }
    }
}

fn hash_color(k: u32) -> Rgb {
    let h = k.wrapping_add(1).wrapping_mul(0x9E37_79B1);
    // keep every channel off zero so no class can collide with nodata black
    [(h >> 24) as u8 | 0x20, (h >> 16) as u8 | 0x20, (h >> 8) as u8 | 0x20]
}

/// Binary PPM (P6), 8-bit RGB, row-major.
pub fn render_class_map(labels: &LabelRaster, palette: &Palette) -> Result<Vec<u8>> {
    let mut out = format!("P6\n{} {}\n255\n", labels.width(), labels.height()).into_bytes();
    for &id in labels.ids() {
        let rgb = if id == NODATA {
            [0, 0, 0]
        } else {
            palette
                .get(id)
                .ok_or_else(|| Error::Data(format!("palette has no color for class {id}")))?
        };
        out.extend_from_slice(&rgb);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{report, ClassMetrics, ConfusionMatrix};
    use crate::raster::ClassEntry;

    fn rep(acc: f64, j: f64, f1: f64) -> MetricsReport {
        MetricsReport {
            accuracy: acc,
            macro_jaccard: j,
            macro_f1: f1,
            per_class: Vec::new(),
        }
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round2(0.005), "0.01");
        assert_eq!(round2(0.8089), "0.81");
        assert_eq!(round2(0.5463), "0.55");
        assert_eq!(round2(0.6711), "0.67");
        assert_eq!(round2(0.125), "0.13");
        assert_eq!(round2(1.0), "1.00");
        assert_eq!(round2(0.0), "0.00");
    }

    #[test]
    fn forest_validation_row() {
        let r = rep(0.8089, 0.5463, 0.6711);
        let t = metrics_table(&[TableRow {
            model: "Random Forest",
            split: "Val",
            report: &r,
        }]);
        assert!(t.contains("| Random Forest | 0.81 | 0.55 | 0.67 |"), "{t}");
        assert_eq!(t.lines().next().unwrap(), "| Model | Val ACC | Val J | Val F1 |");
    }

    #[test]
    fn table_round_trip_and_missing_cells() {
        let a = rep(0.9714, 0.8, 0.88);
        let b = rep(0.8089, 0.5463, 0.6711);
        let rows = [
            TableRow {
                model: "RF",
                split: "Train",
                report: &a,
            },
            TableRow {
                model: "RF",
                split: "Val",
                report: &b,
            },
            TableRow {
                model: "LR",
                split: "Val",
                report: &b,
            },
        ];
        let t = metrics_table(&rows);
        let parsed = parse_metrics_table(&t).unwrap();
        assert_eq!(parsed.len(), 3);
        assert_eq!(parsed[0], ("RF".into(), "Train".into(), [0.97, 0.8, 0.88]));
        assert_eq!(parsed[2], ("LR".into(), "Val".into(), [0.81, 0.55, 0.67]));
        assert!(t.contains("| LR | - | - | - |"));
    }

    #[test]
    fn ppm_bytes() {
        let labels = LabelRaster::new(1, 2, vec![0, NODATA]).unwrap();
        let p = Palette::new([(0, [255, 0, 0])].into());
        let img = render_class_map(&labels, &p).unwrap();
        let header = b"P6\n1 2\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(&img[header.len()..], &[0xFF, 0, 0, 0, 0, 0]);
        let err = render_class_map(&LabelRaster::filled(1, 1, 4), &p).unwrap_err();
        assert!(err.to_string().contains("class 4"));
    }

    #[test]
    fn default_palette_is_distinct() {
        let entries = (0..60)
            .map(|i| ClassEntry {
                class_id: i,
                name: format!("c{i}"),
                pixel_count: 1,
                fraction: 1.0 / 60.0,
            })
            .collect();
        let p = Palette::for_table(&ClassTable::new(entries).unwrap());
        let mut seen: Vec<Rgb> = (0..60).map(|i| p.get(i).unwrap()).collect();
        seen.push([0, 0, 0]);
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 61);
    }

    #[test]
    fn per_class_rows() {
        let cm = ConfusionMatrix::from_rows(&[vec![50, 10], vec![5, 35]]).unwrap();
        let r = report(&cm).unwrap();
        let table = ClassTable::new(vec![
            ClassEntry {
                class_id: 0,
                name: "a".into(),
                pixel_count: 60,
                fraction: 0.6,
            },
            ClassEntry {
                class_id: 1,
                name: "b".into(),
                pixel_count: 40,
                fraction: 0.4,
            },
        ])
        .unwrap();
        let csv = per_class_csv(&r, &table).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class_id,name,support,precision,recall,f1,jaccard");
        // P = 50/55, R = 50/60; P = 35/45, R = 35/40
        assert_eq!(lines[1], "0,a,60,0.9091,0.8333,0.8696,0.7692");
        assert_eq!(lines[2], "1,b,40,0.7778,0.8750,0.8235,0.7000");
        let zero = MetricsReport {
            per_class: vec![
                ClassMetrics {
                    precision: 0.0,
                    recall: 0.0,
                    f1: 0.0,
                    jaccard: 0.0,
                    support: 0
                };
                2
            ],
            ..r
        };
        assert!(per_class_csv(&zero, &table)
            .unwrap()
            .contains("0,a,0,0.0000,0.0000,0.0000,0.0000"));
    }
}
