//! Pre-computed document token-embedding store.
//!
//! On-disk format, little-endian throughout:
//!
//! ```text
//! magic        "LITEIDX1"                          8 bytes
//! version      u32 = 1
//! token_dim    u32  (P')
//! tokens       u32  (L2')
//! doc_count    u64
//! records      doc_count x [u64 doc_id][f32 x P'*L2' row-major]
//! table        doc_count x [u64 doc_id][u64 record_index], sorted by id
//! table_offset u64  (byte offset of the table, always last)
//! ```
//!
//! The header is 28 bytes and every record is `8 + 4 * P' * L2'` bytes, so
//! a record is found in O(1) once the sorted id table resolves its index.
//! Files are immutable after build; any number of readers can share one
//! [`DocumentIndex`] without locking.
//!
//! Values are stored as `f32` and promoted to `f64` on load. Storage
//! accounting distinguishes three figures: `payload_bytes` (embedding bytes
//! only, the quantity latency/storage ratios are stated over),
//! `storage_bytes` (header plus records), and `file_bytes` (everything
//! including the id table).

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::os::unix::fs::FileExt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const INDEX_MAGIC: &[u8; 8] = b"LITEIDX1";
pub const INDEX_VERSION: u32 = 1;
pub const HEADER_BYTES: u64 = 28;

/// Index file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexHeader {
    /// Embedding dimension P' of each stored token.
    pub token_dim: u32,
    /// Tokens per document L2'.
    pub tokens_per_doc: u32,
    pub doc_count: u64,
}

impl IndexHeader {
    /// Bytes of one record: id plus the f32 payload.
    pub fn record_bytes(&self) -> u64 {
        8 + 4 * self.token_dim as u64 * self.tokens_per_doc as u64
    }

    /// Embedding payload only: `doc_count * 4 * P' * L2'`.
    pub fn payload_bytes(&self) -> u64 {
        self.doc_count * 4 * self.token_dim as u64 * self.tokens_per_doc as u64
    }

    /// Header plus records: `28 + doc_count * (8 + 4 * P' * L2')`.
    pub fn storage_bytes(&self) -> u64 {
        HEADER_BYTES + self.doc_count * self.record_bytes()
    }

    /// Full file size including the sorted id table and its trailing offset.
    pub fn file_bytes(&self) -> u64 {
        self.storage_bytes() + 16 * self.doc_count + 8
    }
}

/// How to reduce document matrices before they are stored.
#[derive(Debug, Clone, PartialEq)]
pub enum Reduction {
    None,
    /// Average adjacent token columns in blocks of `factor`.
    AvgPool {
        factor: usize,
    },
    /// Right-multiply by an `L2 x L2'` matrix (acts on every row).
    TokenProjection(Matrix),
    /// Left-multiply by a `P' x P` matrix (acts on every token).
    DimProjection(Matrix),
    /// Token projection followed by dimension projection.
    Composed {
        token: Matrix,
        dim: Matrix,
    },
}

impl Reduction {
    pub fn apply(&self, d: &Matrix) -> Result<Matrix> {
        match self {
            Reduction::None => Ok(d.clone()),
            Reduction::AvgPool { factor } => avg_pool_tokens(d, *factor),
            Reduction::TokenProjection(proj) => project_tokens(d, proj),
            Reduction::DimProjection(proj) => project_dims(d, proj),
            Reduction::Composed { token, dim } => project_dims(&project_tokens(d, token)?, dim),
        }
    }
}

/// Averages each block of `factor` adjacent columns. The factor must divide
/// the token count exactly; silent padding would skew the similarity
/// statistics downstream.
pub fn avg_pool_tokens(d: &Matrix, factor: usize) -> Result<Matrix> {
    if factor == 0 || !d.cols().is_multiple_of(factor) {
        return Err(Error::InvalidArgument(format!(
            "average pooling factor {factor} does not divide {} token columns",
            d.cols()
        )));
    }
    let out_cols = d.cols() / factor;
    let mut out = Matrix::zeros(d.rows(), out_cols);
    let inv = 1.0 / factor as f64;
    for i in 0..d.rows() {
        let row = d.row(i);
        for j in 0..out_cols {
            let sum: f64 = row[j * factor..(j + 1) * factor].iter().sum();
            out.set(i, j, sum * inv);
        }
    }
    Ok(out)
}

/// `D * proj`: shrinks the token axis, leaving dimensions untouched.
pub fn project_tokens(d: &Matrix, proj: &Matrix) -> Result<Matrix> {
    if d.cols() != proj.rows() {
        return Err(Error::shape("project_tokens", d.shape(), proj.shape()));
    }
    d.matmul(proj)
}

/// `proj * D`: shrinks the embedding dimension of every token.
pub fn project_dims(d: &Matrix, proj: &Matrix) -> Result<Matrix> {
    if proj.cols() != d.rows() {
        return Err(Error::shape("project_dims", proj.shape(), d.shape()));
    }
    proj.matmul(d)
}

fn write_header<W: Write>(w: &mut W, header: &IndexHeader) -> std::io::Result<()> {
    w.write_all(INDEX_MAGIC)?;
    w.write_all(&INDEX_VERSION.to_le_bytes())?;
    w.write_all(&header.token_dim.to_le_bytes())?;
    w.write_all(&header.tokens_per_doc.to_le_bytes())?;
    w.write_all(&header.doc_count.to_le_bytes())
}

/// Reduces and writes documents to an index file. All documents must share
/// one post-reduction shape. Output bytes are a pure function of the input,
/// so identical corpora produce identical files.
pub fn build_index<I>(docs: I, reduction: &Reduction, path: impl AsRef<Path>) -> Result<IndexHeader>
where
    I: IntoIterator<Item = (u64, Matrix)>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);

    // Header dims come from the first document; patched in at the end along
    // with the count. An empty corpus gets minimal 1x1 dims.
    let mut header = IndexHeader {
        token_dim: 1,
        tokens_per_doc: 1,
        doc_count: 0,
    };
    write_header(&mut out, &header).map_err(io)?;

    let mut table: Vec<(u64, u64)> = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    for (doc_id, raw) in docs {
        let reduced = reduction.apply(&raw)?;
        match shape {
            None => shape = Some(reduced.shape()),
            Some(expected) if expected != reduced.shape() => {
                return Err(Error::shape("build_index", expected, reduced.shape()));
            }
            _ => {}
        }
        out.write_all(&doc_id.to_le_bytes()).map_err(io)?;
        for &v in reduced.data() {
            out.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
        }
        table.push((doc_id, header.doc_count));
        header.doc_count += 1;
    }
    if let Some((p, l)) = shape {
        header.token_dim = p as u32;
        header.tokens_per_doc = l as u32;
    }

    table.sort_by_key(|&(id, _)| id);
    for w in table.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Format(format!(
                "duplicate document id {} in index input",
                w[0].0
            )));
        }
    }
    let table_offset = header.storage_bytes();
    for &(id, idx) in &table {
        out.write_all(&id.to_le_bytes()).map_err(io)?;
        out.write_all(&idx.to_le_bytes()).map_err(io)?;
    }
    out.write_all(&table_offset.to_le_bytes()).map_err(io)?;

    let mut file = out
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    file.seek(SeekFrom::Start(0)).map_err(io)?;
    write_header(&mut file, &header).map_err(io)?;
    file.flush().map_err(io)?;
    Ok(header)
}

/// Read handle over an immutable index file.
#[derive(Debug)]
pub struct DocumentIndex {
    header: IndexHeader,
    table: Vec<(u64, u64)>,
    file: File,
}

impl DocumentIndex {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));

        let mut head = [0u8; HEADER_BYTES as usize];
        file.read_exact(&mut head)
            .map_err(|_| bad("file too small for index header".into()))?;
        if &head[0..8] != INDEX_MAGIC {
            return Err(bad("bad magic, not an index file".into()));
        }
        let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
        if version != INDEX_VERSION {
            return Err(bad(format!("unsupported index version {version}")));
        }
        let header = IndexHeader {
            token_dim: u32::from_le_bytes(head[12..16].try_into().unwrap()),
            tokens_per_doc: u32::from_le_bytes(head[16..20].try_into().unwrap()),
            doc_count: u64::from_le_bytes(head[20..28].try_into().unwrap()),
        };
        if header.token_dim == 0 || header.tokens_per_doc == 0 {
            return Err(bad("index header has zero dimensions".into()));
        }

        let actual_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if actual_len != header.file_bytes() {
            return Err(bad(format!(
                "truncated or oversized index: expected {} bytes, found {actual_len}",
                header.file_bytes()
            )));
        }

        let mut tail = [0u8; 8];
        file.read_exact_at(&mut tail, actual_len - 8)
            .map_err(|e| Error::io(path, e))?;
        let table_offset = u64::from_le_bytes(tail);
        if table_offset != header.storage_bytes() {
            return Err(bad(format!(
                "id table offset {table_offset} disagrees with record region end {}",
                header.storage_bytes()
            )));
        }

        let mut table = Vec::with_capacity(header.doc_count as usize);
        let mut entry = [0u8; 16];
        for i in 0..header.doc_count {
            file.read_exact_at(&mut entry, table_offset + 16 * i)
                .map_err(|e| Error::io(path, e))?;
            let id = u64::from_le_bytes(entry[0..8].try_into().unwrap());
            let idx = u64::from_le_bytes(entry[8..16].try_into().unwrap());
            if idx >= header.doc_count {
                return Err(bad(format!("table entry for id {id} points past records")));
            }
            table.push((id, idx));
        }
        if table.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(bad("id table is not strictly sorted".into()));
        }

        Ok(DocumentIndex {
            header,
            table,
            file,
        })
    }

    pub fn header(&self) -> &IndexHeader {
        &self.header
    }

    /// All document ids, in sorted order.
    pub fn doc_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.table.iter().map(|&(id, _)| id)
    }

    pub fn contains(&self, doc_id: u64) -> bool {
        self.table
            .binary_search_by_key(&doc_id, |&(id, _)| id)
            .is_ok()
    }

    /// Loads one document matrix, promoting the stored f32 values to f64.
    pub fn load_doc(&self, doc_id: u64) -> Result<Matrix> {
        let slot = self
            .table
            .binary_search_by_key(&doc_id, |&(id, _)| id)
            .map_err(|_| Error::DocNotFound(doc_id))?;
        let record_index = self.table[slot].1;
        let offset = HEADER_BYTES + record_index * self.header.record_bytes();
        let mut buf = vec![0u8; self.header.record_bytes() as usize];
        self.file
            .read_exact_at(&mut buf, offset)
            .map_err(|_| Error::Format(format!("truncated record for document {doc_id}")))?;
        let stored_id = u64::from_le_bytes(buf[0..8].try_into().unwrap());
        if stored_id != doc_id {
            return Err(Error::Format(format!(
                "record {record_index} holds id {stored_id}, table expected {doc_id}"
            )));
        }
        let p = self.header.token_dim as usize;
        let l = self.header.tokens_per_doc as usize;
        let mut data = Vec::with_capacity(p * l);
        for chunk in buf[8..].chunks_exact(4) {
            data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
        }
        Matrix::new(p, l, data)
    }

    /// Loads every document into memory as `(id, matrix)` pairs in id order.
    pub fn load_all(&self) -> Result<Vec<(u64, Matrix)>> {
        self.doc_ids()
            .map(|id| Ok((id, self.load_doc(id)?)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_doc(p: usize, l: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::new(p, l, (0..p * l).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn avg_pool_examples() {
        let d = Matrix::from_rows(&[vec![1.0, 3.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(avg_pool_tokens(&d, 1).unwrap(), d);
        let pooled = avg_pool_tokens(&d, 2).unwrap();
        assert_eq!(pooled.data(), &[2.0, 3.0]);
        let constant = Matrix::new(2, 4, vec![7.0; 8]).unwrap();
        let pooled = avg_pool_tokens(&constant, 2).unwrap();
        assert!(pooled.data().iter().all(|&v| v == 7.0));
        assert!(avg_pool_tokens(&d, 3).is_err());
    }

    #[test]
    fn avg_pool_nested_factors_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_doc(3, 12, &mut rng);
        let once = avg_pool_tokens(&d, 6).unwrap();
        let twice = avg_pool_tokens(&avg_pool_tokens(&d, 2).unwrap(), 3).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projections_match_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = random_doc(2, 3, &mut rng);
        assert_eq!(project_tokens(&d, &Matrix::identity(3)).unwrap(), d);
        assert_eq!(project_dims(&d, &Matrix::identity(2)).unwrap(), d);

        // Mean-token projection reduces to global average pooling.
        let ones = Matrix::new(3, 1, vec![1.0 / 3.0; 3]).unwrap();
        let pooled = project_tokens(&d, &ones).unwrap();
        let direct = avg_pool_tokens(&d, 3).unwrap();
        for (a, b) in pooled.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-12);
        }

        let proj = random_doc(3, 2, &mut rng);
        assert_eq!(project_tokens(&d, &proj).unwrap(), d.matmul(&proj).unwrap());
        let dproj = random_doc(5, 2, &mut rng);
        assert_eq!(project_dims(&d, &dproj).unwrap(), dproj.matmul(&d).unwrap());
        assert!(project_tokens(&d, &Matrix::identity(4)).is_err());
        assert!(project_dims(&d, &Matrix::identity(4)).is_err());
    }

    #[test]
    fn dim_projection_rank_one_rows_proportional() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_doc(3, 4, &mut rng);
        let mut proj = Matrix::zeros(2, 3);
        proj.set_row(0, &[1.0, 2.0, 3.0]);
        proj.set_row(1, &[2.0, 4.0, 6.0]);
        let out = project_dims(&d, &proj).unwrap();
        for j in 0..out.cols() {
            assert!((out.get(1, j) - 2.0 * out.get(0, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn storage_accounting() {
        let empty = IndexHeader {
            token_dim: 4,
            tokens_per_doc: 7,
            doc_count: 0,
        };
        assert_eq!(empty.storage_bytes(), 28);
        assert_eq!(empty.payload_bytes(), 0);

        let one = IndexHeader {
            token_dim: 2,
            tokens_per_doc: 2,
            doc_count: 1,
        };
        assert_eq!(one.storage_bytes(), 28 + 8 + 16);

        let de_style = IndexHeader {
            token_dim: 768,
            tokens_per_doc: 1,
            doc_count: 1000,
        };
        assert_eq!(de_style.storage_bytes(), 28 + 1000 * (8 + 3072));

        // Payload scales linearly in the token count.
        let colbert_style = IndexHeader {
            token_dim: 768,
            tokens_per_doc: 200,
            doc_count: 1000,
        };
        assert_eq!(
            colbert_style.payload_bytes(),
            200 * de_style.payload_bytes()
        );
    }

    #[test]
    fn empty_index_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.idx");
        let header = build_index(Vec::new(), &Reduction::None, &path).unwrap();
        assert_eq!(header.doc_count, 0);
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, header.file_bytes());
        let idx = DocumentIndex::open(&path).unwrap();
        assert_eq!(idx.header().doc_count, 0);
        assert!(matches!(idx.load_doc(5), Err(Error::DocNotFound(5))));
    }

    #[test]
    fn file_size_matches_accounting_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("docs.idx");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let docs: Vec<(u64, Matrix)> = (0..13u64)
            .map(|i| (i * 3, random_doc(4, 6, &mut rng)))
            .collect();
        let header = build_index(docs, &Reduction::None, &path).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, header.file_bytes());
        assert_eq!(
            header.file_bytes(),
            header.storage_bytes() + 16 * header.doc_count + 8
        );
    }

    #[test]
    fn missing_doc_and_corruption_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("docs.idx");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let docs: Vec<(u64, Matrix)> = (0..3u64).map(|i| (i, random_doc(2, 2, &mut rng))).collect();
        build_index(docs, &Reduction::None, &path).unwrap();

        let idx = DocumentIndex::open(&path).unwrap();
        assert!(matches!(idx.load_doc(99), Err(Error::DocNotFound(99))));

        // Truncated file: never a partial matrix.
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(DocumentIndex::open(&path), Err(Error::Format(_))));

        // Corrupt magic.
        let mut bytes2 = bytes.clone();
        bytes2[0] = b'Z';
        std::fs::write(&path, &bytes2).unwrap();
        assert!(matches!(DocumentIndex::open(&path), Err(Error::Format(_))));

        // Unsupported version.
        let mut bytes3 = bytes;
        bytes3[8] = 9;
        std::fs::write(&path, &bytes3).unwrap();
        assert!(matches!(DocumentIndex::open(&path), Err(Error::Format(_))));
    }

    #[test]
    fn shape_drift_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("drift.idx");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let docs = vec![
            (0u64, random_doc(2, 4, &mut rng)),
            (1u64, random_doc(2, 6, &mut rng)),
        ];
        assert!(matches!(
            build_index(docs, &Reduction::None, &path),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.idx");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let docs = vec![
            (7u64, random_doc(2, 2, &mut rng)),
            (7u64, random_doc(2, 2, &mut rng)),
        ];
        assert!(matches!(
            build_index(docs, &Reduction::None, &path),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn reduction_commutes_with_batching() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let docs: Vec<(u64, Matrix)> = (0..5u64).map(|i| (i, random_doc(3, 8, &mut rng))).collect();

        let reduced_first: Vec<(u64, Matrix)> = docs
            .iter()
            .map(|(id, d)| (*id, avg_pool_tokens(d, 4).unwrap()))
            .collect();

        let a = dir.path().join("a.idx");
        let b = dir.path().join("b.idx");
        build_index(docs, &Reduction::AvgPool { factor: 4 }, &a).unwrap();
        build_index(reduced_first, &Reduction::None, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
