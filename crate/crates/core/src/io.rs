//! CSV interchange: market data, sample matrices and predictions.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Direction, FeatureDescriptor, FeatureLayout, FeatureVector, Normalizer, Sample};
use crate::market::{
    FundamentalRecord, Horizon, ImbalanceRecord, LobSnapshot, MarketDataset, PeriodId, Product, ProductLength,
    Timestamp, Trade,
};

pub const TRADES_FILE: &str = "trades.csv";
pub const LOB_FILE: &str = "lob.csv";
pub const FUNDAMENTALS_FILE: &str = "fundamentals.csv";
pub const IMBALANCE_FILE: &str = "imbalance.csv";

pub const TRADES_HEADER: [&str; 6] = ["delivery_start", "length_min", "exec_time", "volume_mw", "price_eur_mwh", "area"];
pub const LOB_HEADER: [&str; 7] = [
    "delivery_start",
    "length_min",
    "snapshot_time",
    "side",
    "level",
    "price_eur_mwh",
    "volume_mw",
];
pub const FUNDAMENTALS_HEADER: [&str; 6] = [
    "delivery_start",
    "horizon",
    "load_mw",
    "solar_mw",
    "wind_onshore_mw",
    "wind_offshore_mw",
];
pub const IMBALANCE_HEADER: [&str; 3] = ["quarter_start", "saldo_mw", "publish_time"];
pub const SAMPLE_META_HEADER: [&str; 8] = [
    "product_start",
    "forecast_time",
    "period",
    "reference_price",
    "future_price",
    "label",
    "norm_mean",
    "norm_sd",
];

#[derive(Serialize, Deserialize)]
struct TradeRow {
    delivery_start: Timestamp,
    length_min: i64,
    exec_time: Timestamp,
    volume_mw: f64,
    price_eur_mwh: f64,
    area: String,
}

#[derive(Serialize, Deserialize)]
struct LobRow {
    delivery_start: Timestamp,
    length_min: i64,
    snapshot_time: Timestamp,
    side: String,
    level: usize,
    price_eur_mwh: f64,
    volume_mw: f64,
}

#[derive(Serialize, Deserialize)]
struct FundamentalRow {
    delivery_start: Timestamp,
    horizon: Horizon,
    load_mw: Option<f64>,
    solar_mw: f64,
    wind_onshore_mw: f64,
    wind_offshore_mw: f64,
}

#[derive(Serialize, Deserialize)]
struct ImbalanceRow {
    quarter_start: Timestamp,
    saldo_mw: f64,
    publish_time: Timestamp,
}

fn schema(path: &Path, line: u64, e: impl std::fmt::Display) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn check_header<R: std::io::Read>(rdr: &mut csv::Reader<R>, path: &Path, expected: &[&str]) -> Result<csv::StringRecord> {
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got.len() < expected.len() || got[..expected.len()] != *expected {
        return Err(schema(
            path,
            1,
            format!("expected header {:?}, got {:?}", expected.join(","), got.join(",")),
        ));
    }
    Ok(headers)
}

/// Reads every row of a headed CSV with an exact header, passing each record with its line number.
fn read_rows<T: DeserializeOwned>(
    path: &Path,
    header: &[&str],
    mut f: impl FnMut(T, u64) -> Result<()>,
) -> Result<()> {
    let mut rdr = open_reader(path)?;
    let headers = check_header(&mut rdr, path, header)?;
    if headers.len() != header.len() {
        return Err(schema(path, 1, format!("unexpected extra columns in {:?}", headers)));
    }
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(Error::csv(path, e)),
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: T = record.deserialize(Some(&headers)).map_err(|e| schema(path, line, e))?;
        f(row, line).map_err(|e| match e {
            Error::Schema { .. } => e,
            other => schema(path, line, other),
        })?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file)))
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> Result<()> {
    let mut inner = w
        .into_inner()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

/// Writes preformatted string rows under `header`.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::csv(path, e))?;
    }
    finish(path, w)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut out = Vec::new();
    read_rows(path, header, |row: T, _| {
        out.push(row);
        Ok(())
    })?;
    Ok(out)
}

/// Writes `header` then one serialized row per item; the header is present even with no rows.
pub fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    finish(path, w)
}

/// Writes the four market data files into `dir`.
pub fn write_dataset(dataset: &MarketDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_rows(
        &dir.join(TRADES_FILE),
        &TRADES_HEADER,
        dataset.products().flat_map(|p| {
            dataset.tape(p).entries().iter().map(move |e| TradeRow {
                delivery_start: p.delivery_start,
                length_min: p.length.minutes(),
                exec_time: e.exec_time,
                volume_mw: e.volume,
                price_eur_mwh: e.price,
                area: dataset.area_name(e.area).to_string(),
            })
        }),
    )?;
    write_rows(
        &dir.join(LOB_FILE),
        &LOB_HEADER,
        dataset.books().flat_map(|(p, snaps)| {
            snaps.iter().flat_map(move |s| {
                let mut rows: Vec<LobRow> = Vec::with_capacity(s.bids.len() + s.asks.len());
                for (name, levels) in [("bid", &s.bids), ("ask", &s.asks)] {
                    rows.extend(levels.iter().enumerate().map(|(i, &(price, vol))| LobRow {
                        delivery_start: p.delivery_start,
                        length_min: p.length.minutes(),
                        snapshot_time: s.time,
                        side: name.to_string(),
                        level: i + 1,
                        price_eur_mwh: price,
                        volume_mw: vol,
                    }));
                }
                rows
            })
        }),
    )?;
    write_rows(
        &dir.join(FUNDAMENTALS_FILE),
        &FUNDAMENTALS_HEADER,
        dataset.fundamentals().map(|r| FundamentalRow {
            delivery_start: r.delivery_start,
            horizon: r.horizon,
            load_mw: r.load_mw,
            solar_mw: r.solar_mw,
            wind_onshore_mw: r.wind_onshore_mw,
            wind_offshore_mw: r.wind_offshore_mw,
        }),
    )?;
    write_rows(
        &dir.join(IMBALANCE_FILE),
        &IMBALANCE_HEADER,
        dataset.imbalances().iter().map(|r| ImbalanceRow {
            quarter_start: r.quarter_start,
            saldo_mw: r.saldo_mw,
            publish_time: r.publish_time,
        }),
    )
}

fn product_of(start: Timestamp, length_min: i64) -> Result<Product> {
    Product::new(start, ProductLength::from_minutes(length_min)?)
}

/// Reads the four market data files from `dir`. All four must exist.
pub fn read_dataset(dir: &Path) -> Result<MarketDataset> {
    let mut b = MarketDataset::builder();

    read_rows(&dir.join(TRADES_FILE), &TRADES_HEADER, |r: TradeRow, _| {
        let area = b.area(&r.area);
        b.add_trade(Trade {
            product: product_of(r.delivery_start, r.length_min)?,
            exec_time: r.exec_time,
            volume: r.volume_mw,
            price: r.price_eur_mwh,
            area,
        })
    })?;

    let lob_path = dir.join(LOB_FILE);
    type Ladder = Vec<(usize, f64, f64, u64)>;
    let mut snaps: BTreeMap<(Product, Timestamp), (Ladder, Ladder)> = BTreeMap::new();
    read_rows(&lob_path, &LOB_HEADER, |r: LobRow, line| {
        let product = product_of(r.delivery_start, r.length_min)?;
        let entry = snaps.entry((product, r.snapshot_time)).or_default();
        let level = (r.level, r.price_eur_mwh, r.volume_mw, line);
        match r.side.as_str() {
            "bid" => entry.0.push(level),
            "ask" => entry.1.push(level),
            other => return Err(Error::InvalidArgument(format!("side must be bid or ask, got {other:?}"))),
        }
        Ok(())
    })?;
    for ((product, time), (mut bids, mut asks)) in snaps {
        let ladder = |levels: &mut Ladder| -> Result<Vec<(f64, f64)>> {
            levels.sort_by_key(|l| l.0);
            for (i, l) in levels.iter().enumerate() {
                if l.0 != i + 1 {
                    return Err(schema(
                        &lob_path,
                        l.3,
                        format!("levels of {product} @ {time} must be 1..n without gaps or duplicates"),
                    ));
                }
            }
            Ok(levels.iter().map(|l| (l.1, l.2)).collect())
        };
        let snapshot = LobSnapshot {
            product,
            time,
            bids: ladder(&mut bids)?,
            asks: ladder(&mut asks)?,
        };
        let line = bids.iter().chain(&asks).map(|l| l.3).min().unwrap_or(0);
        b.add_snapshot(snapshot).map_err(|e| schema(&lob_path, line, e))?;
    }

    read_rows(&dir.join(FUNDAMENTALS_FILE), &FUNDAMENTALS_HEADER, |r: FundamentalRow, _| {
        b.add_fundamental(FundamentalRecord {
            delivery_start: r.delivery_start,
            horizon: r.horizon,
            load_mw: r.load_mw,
            solar_mw: r.solar_mw,
            wind_onshore_mw: r.wind_onshore_mw,
            wind_offshore_mw: r.wind_offshore_mw,
        })
    })?;

    read_rows(&dir.join(IMBALANCE_FILE), &IMBALANCE_HEADER, |r: ImbalanceRow, _| {
        b.add_imbalance(ImbalanceRecord {
            quarter_start: r.quarter_start,
            saldo_mw: r.saldo_mw,
            publish_time: r.publish_time,
        })
    })?;

    Ok(b.build())
}

pub fn samples_file_name(period: PeriodId, feature_set: &str) -> String {
    format!("samples_{period}_{feature_set}.csv")
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes samples as metadata columns followed by one column per layout descriptor.
pub fn write_samples(path: &Path, layout: &FeatureLayout, samples: &[Sample]) -> Result<()> {
    let mut w = create(path)?;
    let header: Vec<String> = SAMPLE_META_HEADER
        .iter()
        .map(|s| s.to_string())
        .chain(layout.columns())
        .collect();
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for s in samples {
        if s.features.layout.as_ref() != layout {
            return Err(Error::LayoutMismatch(format!(
                "sample of {} at {} does not use the file's layout",
                s.product, s.forecast_time
            )));
        }
        row.clear();
        row.push(s.product.delivery_start.to_string());
        row.push(s.forecast_time.to_string());
        row.push(s.period.to_string());
        row.push(s.reference_price.to_string());
        row.push(opt(s.future_price));
        row.push(s.label.map(|l| l.to_string()).unwrap_or_default());
        row.push(s.normalizer.mean.to_string());
        row.push(s.normalizer.sd.to_string());
        row.extend(s.features.values.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    finish(path, w)
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e: T::Err| schema(path, line, format!("column {name}: {e} ({raw:?})")))
}

/// Reads a sample matrix written by [`write_samples`]. Products are hourly.
pub fn read_samples(path: &Path) -> Result<(Arc<FeatureLayout>, Vec<Sample>)> {
    let mut rdr = open_reader(path)?;
    let headers = check_header(&mut rdr, path, &SAMPLE_META_HEADER)?;
    let descriptors = headers
        .iter()
        .skip(SAMPLE_META_HEADER.len())
        .map(FeatureDescriptor::parse_column)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| schema(path, 1, e))?;
    let layout = Arc::new(FeatureLayout { descriptors });
    let mut samples = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(Error::csv(path, e)),
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let f = |i: usize| &record[i];
        let start: Timestamp = parse_field(path, line, "product_start", f(0))?;
        let product = Product::hourly(start).map_err(|e| schema(path, line, e))?;
        let future_price = match f(4) {
            "" => None,
            raw => Some(parse_field::<f64>(path, line, "future_price", raw)?),
        };
        let label = match f(5) {
            "" => None,
            raw => Some(parse_field::<Direction>(path, line, "label", raw)?),
        };
        if label.is_some() != future_price.is_some() {
            return Err(schema(path, line, "label present iff future_price present"));
        }
        let values = (SAMPLE_META_HEADER.len()..record.len())
            .map(|i| parse_field::<f64>(path, line, &headers[i], f(i)))
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            product,
            forecast_time: parse_field(path, line, "forecast_time", f(1))?,
            period: parse_field(path, line, "period", f(2))?,
            reference_price: parse_field(path, line, "reference_price", f(3))?,
            future_price,
            label,
            normalizer: Normalizer {
                mean: parse_field(path, line, "norm_mean", f(6))?,
                sd: parse_field(path, line, "norm_sd", f(7))?,
            },
            features: FeatureVector {
                values,
                layout: Arc::clone(&layout),
            },
        });
    }
    Ok((layout, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{assemble, AssembleConfig, FeatureSetId};
    use crate::synth::{generate, GeneratorConfig};

    fn small() -> MarketDataset {
        generate(&GeneratorConfig {
            days: 1,
            areas: vec!["A".into(), "B".into()],
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn dataset_round_trip_is_byte_stable() {
        let ds = small();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_dataset(&ds, a.path()).unwrap();
        let back = read_dataset(a.path()).unwrap();
        write_dataset(&back, b.path()).unwrap();
        for f in [TRADES_FILE, LOB_FILE, FUNDAMENTALS_FILE, IMBALANCE_FILE] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            let y = std::fs::read(b.path().join(f)).unwrap();
            assert!(x == y, "{f} differs after round trip");
        }
        let p = ds.hourly_products().next().copied().unwrap();
        assert_eq!(ds.tape(&p).entries(), back.tape(&p).entries());
        assert_eq!(ds.trade_count(), back.trade_count());
    }

    #[test]
    fn exact_headers() {
        let ds = small();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let first = |f: &str| {
            std::fs::read_to_string(dir.path().join(f))
                .unwrap()
                .lines()
                .next()
                .unwrap()
                .to_string()
        };
        assert_eq!(first(TRADES_FILE), "delivery_start,length_min,exec_time,volume_mw,price_eur_mwh,area");
        assert_eq!(
            first(LOB_FILE),
            "delivery_start,length_min,snapshot_time,side,level,price_eur_mwh,volume_mw"
        );
        assert_eq!(
            first(FUNDAMENTALS_FILE),
            "delivery_start,horizon,load_mw,solar_mw,wind_onshore_mw,wind_offshore_mw"
        );
        assert_eq!(first(IMBALANCE_FILE), "quarter_start,saldo_mw,publish_time");
    }

    fn write_min_files(dir: &Path, trades: &str) {
        std::fs::write(dir.join(TRADES_FILE), trades).unwrap();
        std::fs::write(dir.join(LOB_FILE), LOB_HEADER.join(",") + "\n").unwrap();
        std::fs::write(dir.join(FUNDAMENTALS_FILE), FUNDAMENTALS_HEADER.join(",") + "\n").unwrap();
        std::fs::write(dir.join(IMBALANCE_FILE), IMBALANCE_HEADER.join(",") + "\n").unwrap();
    }

    #[test]
    fn schema_errors_name_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        write_min_files(
            dir.path(),
            "delivery_start,length_min,exec_time,volume_mw,price_eur_mwh,area\n\
             2024-06-01T10:00:00Z,60,2024-06-01T08:00:00Z,1.0,50.0,DE\n\
             2024-06-01T10:00:00Z,60,2024-06-01T08:01:00Z,-1.0,50.0,DE\n",
        );
        match read_dataset(dir.path()) {
            Err(Error::Schema { path, line, .. }) => {
                assert!(path.ends_with(TRADES_FILE));
                assert_eq!(line, 3);
            }
            other => panic!("expected schema error, got {other:?}"),
        }

        write_min_files(dir.path(), "delivery,length_min\n");
        assert!(matches!(read_dataset(dir.path()), Err(Error::Schema { line: 1, .. })));

        write_min_files(
            dir.path(),
            "delivery_start,length_min,exec_time,volume_mw,price_eur_mwh,area\n\
             2024-06-01T10:00:00Z,60,not-a-time,1.0,50.0,DE\n",
        );
        assert!(matches!(read_dataset(dir.path()), Err(Error::Schema { line: 2, .. })));
    }

    #[test]
    fn missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains(TRADES_FILE), "{err}");
        assert!(err.path().is_some());
    }

    #[test]
    fn lob_level_gap_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_min_files(dir.path(), &(TRADES_HEADER.join(",") + "\n"));
        std::fs::write(
            dir.path().join(LOB_FILE),
            LOB_HEADER.join(",")
                + "\n2024-06-01T10:00:00Z,60,2024-06-01T08:00:00Z,bid,1,49.0,1.0\n\
                   2024-06-01T10:00:00Z,60,2024-06-01T08:00:00Z,bid,3,48.0,1.0\n",
        )
        .unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Schema { .. })));
    }

    #[test]
    fn samples_round_trip() {
        let ds = small();
        let asm = assemble(
            &ds,
            FeatureSetId::LobTopMw,
            PeriodId::P1toHalf,
            None,
            &AssembleConfig::default(),
        )
        .unwrap();
        assert!(!asm.samples.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(samples_file_name(PeriodId::P1toHalf, "lob-top-mw"));
        write_samples(&path, &asm.layout, &asm.samples).unwrap();
        let (layout, back) = read_samples(&path).unwrap();
        assert_eq!(*layout, *asm.layout);
        assert_eq!(back, asm.samples);
    }
}
