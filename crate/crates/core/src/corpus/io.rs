//! CSV ingestion and serialisation.
//!
//! Schema, one accentual phrase per row:
//! `speaker_id,gender,syllable_count,label,f0_0,...,f0_N`.
//! A frame is unvoiced when its cell is `NaN`, unparseable or `<= 0` Hz. Empty
//! trailing cells are treated as frames past the end of the phrase; empty cells
//! before the last non-empty one are unvoiced frames. Lines starting with `#`
//! are comments (artifacts record their config hash there).
//!
//! Normalised datasets are written with a companion `<stem>.mask.csv` holding
//! the validity mask as 0/1, since a normalised value of 0 is a valid frame.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::corpus::{fix_length, Dataset, Gender, Sample, ToneLabel, FRAMES};
use crate::error::{Error, Result};

const META_COLUMNS: [&str; 4] = ["speaker_id", "gender", "syllable_count", "label"];

/// Location of the companion mask file for a dataset CSV.
pub fn mask_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.mask.csv"))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file))
}

/// Column index of each metadata field and the ordered list of frame columns.
fn parse_header(headers: &csv::StringRecord) -> Result<([usize; 4], Vec<usize>)> {
    let mut meta = [0usize; 4];
    for (slot, name) in meta.iter_mut().zip(META_COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let mut frames: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(col, h)| h.strip_prefix("f0_").map(|n| (col, n)))
        .map(|(col, n)| {
            n.parse::<usize>().map(|idx| (idx, col)).map_err(|_| Error::Schema(format!("bad frame column `f0_{n}`")))
        })
        .collect::<Result<_>>()?;
    if frames.is_empty() {
        return Err(Error::MissingColumn("f0_0".into()));
    }
    frames.sort_unstable();
    for (expected, (idx, _)) in frames.iter().enumerate() {
        if *idx != expected {
            return Err(Error::MissingColumn(format!("f0_{expected}")));
        }
    }
    Ok((meta, frames.into_iter().map(|(_, col)| col).collect()))
}

fn parse_frame(cell: &str) -> Option<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Some(v),
        _ => None,
    }
}

/// Loads a dataset CSV. When a companion mask file exists the values are taken
/// as already normalised and the mask comes from that file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let (meta, frame_cols) = parse_header(rdr.headers()?)?;
    let mpath = mask_path(path);
    let masks = if mpath.exists() { Some(load_masks(&mpath, frame_cols.len())?) } else { None };

    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let label: ToneLabel =
            field(meta[3]).parse().map_err(|_| Error::UnknownLabel { row, label: field(meta[3]).to_string() })?;
        let gender = field(meta[1]).parse::<Gender>().map_err(|e| Error::Row { row, message: e.to_string() })?;
        let syllable_count: u32 = field(meta[2])
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Row { row, message: format!("bad syllable_count `{}`", field(meta[2])) })?;

        let cells: Vec<&str> = frame_cols.iter().map(|&c| field(c)).collect();
        let (values, mask): (Vec<f64>, Vec<bool>) = match &masks {
            Some(m) => {
                let mrow = m.get(i).ok_or_else(|| Error::Row { row, message: "no mask row".into() })?;
                cells
                    .iter()
                    .zip(mrow)
                    .map(|(c, &voiced)| match (voiced, c.parse::<f64>()) {
                        (true, Ok(v)) if v.is_finite() => (v, true),
                        _ => (0.0, false),
                    })
                    .unzip()
            }
            None => {
                let len = cells.iter().rposition(|c| !c.is_empty()).map_or(0, |p| p + 1);
                cells[..len].iter().map(|c| parse_frame(c).map_or((0.0, false), |v| (v, true))).unzip()
            }
        };
        let contour = if values.is_empty() {
            // all cells empty: a fully unvoiced phrase
            fix_length(&[0.0], &[false], FRAMES)?
        } else {
            fix_length(&values, &mask, FRAMES)?
        };
        samples.push(Sample { contour, label, speaker_id: field(meta[0]).to_string(), gender, syllable_count });
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(samples, masks.is_some())
}

fn load_masks(path: &Path, frames: usize) -> Result<Vec<Vec<bool>>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    let cols: Vec<usize> = (0..frames)
        .map(|i| {
            let name = format!("m_{i}");
            headers.iter().position(|h| h == name).ok_or(Error::MissingColumn(name))
        })
        .collect::<Result<_>>()?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(cols.iter().map(|&c| rec.get(c) == Some("1")).collect())
        })
        .collect()
}

fn write_comment(file: &mut File, path: &Path, config_hash: Option<&str>) -> Result<()> {
    if let Some(h) = config_hash {
        writeln!(file, "# config_hash: {h}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Writes the dataset in the ingestion schema; unvoiced frames are empty cells.
/// Normalised datasets also get the companion mask file.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>, config_hash: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    let frames = dataset.samples.first().map_or(FRAMES, |s| s.contour.len());
    let mut header: Vec<String> = META_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..frames).map(|i| format!("f0_{i}")));

    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_comment(&mut file, path, config_hash)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(&header)?;
    for s in &dataset.samples {
        let mut rec =
            vec![s.speaker_id.clone(), s.gender.to_string(), s.syllable_count.to_string(), s.label.to_string()];
        rec.extend(
            s.contour
                .values()
                .iter()
                .zip(s.contour.mask())
                .map(|(v, &m)| if m { format!("{v}") } else { String::new() }),
        );
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let mpath = mask_path(path);
    if dataset.normalized {
        let mut file = File::create(&mpath).map_err(|e| Error::io(&mpath, e))?;
        write_comment(&mut file, &mpath, config_hash)?;
        let mut w = csv::Writer::from_writer(file);
        let mut header = vec!["speaker_id".to_string()];
        header.extend((0..frames).map(|i| format!("m_{i}")));
        w.write_record(&header)?;
        for s in &dataset.samples {
            let mut rec = vec![s.speaker_id.clone()];
            rec.extend(s.contour.mask().iter().map(|&m| if m { "1" } else { "0" }.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(&mpath, e))?;
    } else if mpath.exists() {
        std::fs::remove_file(&mpath).map_err(|e| Error::io(&mpath, e))?;
    }
    Ok(())
}
