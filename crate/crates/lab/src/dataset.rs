//! CSV datasets for replay: `blocks.csv`, `trades.csv`, `quotes.csv`.
//!
//! | file        | columns |
//! |-------------|---------|
//! | blocks.csv  | `slot, block_number, builder_id, timestamp_ms, total_value_eth` |
//! | trades.csv  | `trade_id, block_number, searcher_id, token_buy, amount_buy, token_sell, amount_sell, tip_eth, transfer_eth, base_fee_eth` |
//! | quotes.csv  | `token, timestamp_ms, mid_price_eth` |
//!
//! Amounts are token units, prices are ETH per token unit and ETH
//! columns are decimal strings parsed exactly to wei. Malformed rows are
//! rejected with their line number; the rest of the file still loads.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use freeopt_core::replay::{BlockRecord, QuoteBook, QuoteSeries, TradeRecord, Wei};
use freeopt_core::sim::SimulatedDataset;

pub const BLOCKS_FILE: &str = "blocks.csv";
pub const TRADES_FILE: &str = "trades.csv";
pub const QUOTES_FILE: &str = "quotes.csv";

pub const BLOCK_COLUMNS: [&str; 5] = ["slot", "block_number", "builder_id", "timestamp_ms", "total_value_eth"];
pub const TRADE_COLUMNS: [&str; 10] = [
    "trade_id",
    "block_number",
    "searcher_id",
    "token_buy",
    "amount_buy",
    "token_sell",
    "amount_sell",
    "tip_eth",
    "transfer_eth",
    "base_fee_eth",
];
pub const QUOTE_COLUMNS: [&str; 3] = ["token", "timestamp_ms", "mid_price_eth"];

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: &'static str },
}

/// A row that failed to parse or validate.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Rejection {
    pub file: String,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub blocks: Vec<BlockRecord>,
    pub trades: Vec<TradeRecord>,
    pub quotes: QuoteBook,
    /// Data rows seen in blocks.csv.
    pub block_rows: usize,
    pub rejected: Vec<Rejection>,
    /// Blocks with at least one rejected trade row.
    pub tainted_blocks: BTreeSet<u64>,
}

impl Dataset {
    pub fn rejected_blocks(&self) -> usize {
        self.rejected.iter().filter(|r| r.file == BLOCKS_FILE).count()
    }

    pub fn trades_by_block(&self) -> BTreeMap<u64, Vec<&TradeRecord>> {
        let mut map: BTreeMap<u64, Vec<&TradeRecord>> = BTreeMap::new();
        for t in &self.trades {
            map.entry(t.block_number).or_default().push(t);
        }
        map
    }
}

struct Table<R: Read> {
    file: String,
    reader: csv::Reader<R>,
    index: Vec<usize>,
}

impl<R: Read> Table<R> {
    fn open(file: &str, source: R, columns: &[&'static str]) -> Result<Self, DatasetError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(source);
        let headers = reader.headers().map_err(|source| DatasetError::Csv { file: file.into(), source })?.clone();
        let index = columns
            .iter()
            .map(|&c| {
                headers
                    .iter()
                    .position(|h| h == c)
                    .ok_or(DatasetError::MissingColumn { file: file.into(), column: c })
            })
            .collect::<Result<_, _>>()?;
        Ok(Table { file: file.into(), reader, index })
    }

    /// Calls `row` with the selected fields of each record and its line.
    fn for_each(
        mut self,
        rejected: &mut Vec<Rejection>,
        mut row: impl FnMut(&[&str], u64) -> Result<(), String>,
    ) -> Result<usize, DatasetError> {
        let mut count = 0;
        let mut record = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut record) {
                Ok(false) => break,
                Ok(true) => {}
                Err(e) => {
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    count += 1;
                    rejected.push(Rejection { file: self.file.clone(), line, reason: e.to_string() });
                    continue;
                }
            }
            count += 1;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let fields: Option<Vec<&str>> = self.index.iter().map(|&i| record.get(i)).collect();
            let outcome = match fields {
                Some(f) => row(&f, line),
                None => Err(format!("expected at least {} fields, found {}", self.index.len(), record.len())),
            };
            if let Err(reason) = outcome {
                rejected.push(Rejection { file: self.file.clone(), line, reason });
            }
        }
        Ok(count)
    }
}

fn int<T: std::str::FromStr>(s: &str, column: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("{column}: `{s}` is not an integer"))
}

fn real(s: &str, column: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{column}: `{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{column}: must be finite"))
    }
}

fn eth(s: &str, column: &str) -> Result<Wei, String> {
    s.parse::<Wei>().map_err(|e| format!("{column}: {e}"))
}

fn nonempty(s: &str, column: &str) -> Result<String, String> {
    if s.is_empty() {
        Err(format!("{column}: must be non-empty"))
    } else {
        Ok(s.to_string())
    }
}

pub fn read_blocks<R: Read>(source: R, rejected: &mut Vec<Rejection>) -> Result<(Vec<BlockRecord>, usize), DatasetError> {
    let mut blocks = Vec::new();
    let mut seen = BTreeSet::new();
    let count = Table::open(BLOCKS_FILE, source, &BLOCK_COLUMNS)?.for_each(rejected, |f, _| {
        let block = BlockRecord {
            slot: int(f[0], "slot")?,
            block_number: int(f[1], "block_number")?,
            builder_id: nonempty(f[2], "builder_id")?,
            timestamp_ms: int(f[3], "timestamp_ms")?,
            total_value: eth(f[4], "total_value_eth")?,
        };
        if block.total_value.is_negative() {
            return Err("total_value_eth: must be >= 0".into());
        }
        if !seen.insert(block.block_number) {
            return Err(format!("block_number {} is duplicated", block.block_number));
        }
        blocks.push(block);
        Ok(())
    })?;
    Ok((blocks, count))
}

/// Trades plus the block numbers of rejected rows that still named one.
/// With `known_blocks`, trades naming any other block are rejected.
pub fn read_trades<R: Read>(
    source: R,
    known_blocks: Option<&BTreeSet<u64>>,
    rejected: &mut Vec<Rejection>,
) -> Result<(Vec<TradeRecord>, BTreeSet<u64>), DatasetError> {
    let mut trades = Vec::new();
    let mut tainted = BTreeSet::new();
    let mut seen = BTreeSet::new();
    Table::open(TRADES_FILE, source, &TRADE_COLUMNS)?.for_each(rejected, |f, _| {
        let block_number: Result<u64, _> = int(f[1], "block_number");
        let parsed = (|| {
            let trade = TradeRecord {
                trade_id: nonempty(f[0], "trade_id")?,
                block_number: block_number.clone()?,
                searcher_id: nonempty(f[2], "searcher_id")?,
                token_buy: nonempty(f[3], "token_buy")?,
                amount_buy: real(f[4], "amount_buy")?,
                token_sell: nonempty(f[5], "token_sell")?,
                amount_sell: real(f[6], "amount_sell")?,
                tip: eth(f[7], "tip_eth")?,
                transfer: eth(f[8], "transfer_eth")?,
                base_fee: eth(f[9], "base_fee_eth")?,
            };
            trade.validate().map_err(|e| e.to_string())?;
            if known_blocks.is_some_and(|k| !k.contains(&trade.block_number)) {
                return Err(format!("block_number {} is not in {BLOCKS_FILE}", trade.block_number));
            }
            if !seen.insert(trade.trade_id.clone()) {
                return Err(format!("trade_id `{}` is duplicated", trade.trade_id));
            }
            Ok(trade)
        })();
        match parsed {
            Ok(t) => {
                trades.push(t);
                Ok(())
            }
            Err(reason) => {
                if let Ok(b) = block_number {
                    tainted.insert(b);
                }
                Err(reason)
            }
        }
    })?;
    Ok((trades, tainted))
}

pub fn read_quotes<R: Read>(source: R, rejected: &mut Vec<Rejection>) -> Result<QuoteBook, DatasetError> {
    let mut series: BTreeMap<String, QuoteSeries> = BTreeMap::new();
    Table::open(QUOTES_FILE, source, &QUOTE_COLUMNS)?.for_each(rejected, |f, _| {
        let token = nonempty(f[0], "token")?;
        let ts: i64 = int(f[1], "timestamp_ms")?;
        let price = real(f[2], "mid_price_eth")?;
        series
            .entry(token.clone())
            .or_insert_with(|| QuoteSeries::new(token))
            .push(ts, price)
            .map_err(|e| e.to_string())
    })?;
    let mut book = QuoteBook::default();
    for s in series.into_values() {
        book.insert(s);
    }
    Ok(book)
}

fn open(path: &Path) -> Result<File, DatasetError> {
    File::open(path).map_err(|source| DatasetError::Io { path: path.into(), source })
}

/// Loads the three files from `dir`. Trades naming an unknown block are
/// rejected.
pub fn load_dir(dir: &Path) -> Result<Dataset, DatasetError> {
    let mut rejected = Vec::new();
    let (blocks, block_rows) = read_blocks(open(&dir.join(BLOCKS_FILE))?, &mut rejected)?;
    let known: BTreeSet<u64> = blocks.iter().map(|b| b.block_number).collect();
    let (trades, tainted_blocks) = read_trades(open(&dir.join(TRADES_FILE))?, Some(&known), &mut rejected)?;
    let quotes = read_quotes(open(&dir.join(QUOTES_FILE))?, &mut rejected)?;
    Ok(Dataset { blocks, trades, quotes, block_rows, rejected, tainted_blocks })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, DatasetError> {
    let file = File::create(path).map_err(|source| DatasetError::Io { path: path.into(), source })?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(file: &str) -> impl Fn(csv::Error) -> DatasetError + '_ {
    move |source| DatasetError::Csv { file: file.into(), source }
}

/// Writes a dataset in the ingestion schema. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_dataset(dir: &Path, data: &SimulatedDataset) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|source| DatasetError::Io { path: dir.into(), source })?;
    let mut w = csv_writer(&dir.join(BLOCKS_FILE))?;
    w.write_record(BLOCK_COLUMNS).map_err(csv_err(BLOCKS_FILE))?;
    for b in &data.blocks {
        w.write_record([
            b.slot.to_string(),
            b.block_number.to_string(),
            b.builder_id.clone(),
            b.timestamp_ms.to_string(),
            b.total_value.to_string(),
        ])
        .map_err(csv_err(BLOCKS_FILE))?;
    }
    flush(w, BLOCKS_FILE)?;

    let mut w = csv_writer(&dir.join(TRADES_FILE))?;
    w.write_record(TRADE_COLUMNS).map_err(csv_err(TRADES_FILE))?;
    for t in &data.trades {
        w.write_record([
            t.trade_id.clone(),
            t.block_number.to_string(),
            t.searcher_id.clone(),
            t.token_buy.clone(),
            t.amount_buy.to_string(),
            t.token_sell.clone(),
            t.amount_sell.to_string(),
            t.tip.to_string(),
            t.transfer.to_string(),
            t.base_fee.to_string(),
        ])
        .map_err(csv_err(TRADES_FILE))?;
    }
    flush(w, TRADES_FILE)?;

    let mut w = csv_writer(&dir.join(QUOTES_FILE))?;
    w.write_record(QUOTE_COLUMNS).map_err(csv_err(QUOTES_FILE))?;
    for s in data.quotes.series.values() {
        for (ts, p) in s.timestamps_ms.iter().zip(&s.prices) {
            w.write_record([s.token.clone(), ts.to_string(), p.to_string()]).map_err(csv_err(QUOTES_FILE))?;
        }
    }
    flush(w, QUOTES_FILE)
}

fn flush<W: Write>(mut w: csv::Writer<W>, file: &str) -> Result<(), DatasetError> {
    w.flush().map_err(|e| DatasetError::Csv { file: file.into(), source: e.into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_with_line_numbers() {
        let text = "slot,block_number,builder_id,timestamp_ms,total_value_eth\n\
                    1,10,a,1000,0.5\n\
                    2,11,b,2000,abc\n\
                    3,10,c,3000,0.1\n\
                    4,12,d,4000,-1\n\
                    5,13,e\n";
        let mut rejected = Vec::new();
        let (blocks, rows) = read_blocks(text.as_bytes(), &mut rejected).unwrap();
        assert_eq!(rows, 5);
        assert_eq!(blocks.len(), 1);
        let lines: Vec<u64> = rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![3, 4, 5, 6]);
        assert!(rejected[0].reason.contains("total_value_eth"));
        assert!(rejected[1].reason.contains("duplicated"));
    }

    #[test]
    fn columns_found_by_name() {
        let text = "total_value_eth,slot,timestamp_ms,builder_id,block_number,extra\n0.25,1,0,x,7,y\n";
        let (blocks, _) = read_blocks(text.as_bytes(), &mut Vec::new()).unwrap();
        assert_eq!(blocks[0].block_number, 7);
        assert_eq!(blocks[0].total_value, "0.25".parse().unwrap());
        let missing = read_blocks("slot,block_number\n".as_bytes(), &mut Vec::new());
        assert!(matches!(missing, Err(DatasetError::MissingColumn { column: "builder_id", .. })));
    }

    #[test]
    fn rejected_trade_taints_its_block() {
        let header = TRADE_COLUMNS.join(",");
        let text = format!("{header}\nt1,5,s,WETH,1,USDC,2000,0.01,0,0\nt2,6,s,WETH,-1,USDC,2000,0,0,0\nt3,x,s,WETH,1,USDC,1,0,0,0\n");
        let mut rejected = Vec::new();
        let (trades, tainted) = read_trades(text.as_bytes(), None, &mut rejected).unwrap();
        assert_eq!(trades.len(), 1);
        assert_eq!(tainted.into_iter().collect::<Vec<_>>(), vec![6]);
        assert_eq!(rejected.len(), 2);
    }

    #[test]
    fn quotes_must_increase() {
        let text = "token,timestamp_ms,mid_price_eth\nUSDC,0,0.0005\nUSDC,0,0.0005\nUSDC,10,0\nDAI,5,0.0005\n";
        let mut rejected = Vec::new();
        let book = read_quotes(text.as_bytes(), &mut rejected).unwrap();
        assert_eq!(rejected.iter().map(|r| r.line).collect::<Vec<_>>(), vec![3, 4]);
        assert_eq!(book.series["USDC"].prices.len(), 1);
        assert!(book.series.contains_key("DAI"));
    }
}
