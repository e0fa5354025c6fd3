//! Forward kernels and gradient rules for every tape operation.

use super::tape::Op;
use super::{Tensor, TensorError};

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn map_unary(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| f(v)).collect(),
        requires_grad: false,
        grad: None,
    }
}

pub(crate) fn apply_mask(x: &Tensor, mask: &[f64]) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().zip(mask).map(|(&v, &m)| v * m).collect(),
        requires_grad: false,
        grad: None,
    }
}

fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::ShapeMismatch { op, detail }
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    match (a.rank(), b.rank()) {
        (2, 2) => {
            let (m, k) = (a.rows(), a.cols());
            let (k2, n) = (b.rows(), b.cols());
            if k != k2 {
                return Err(shape_err("matmul", format!("[{m}x{k}] x [{k2}x{n}]")));
            }
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let arow = &a.data[i * k..(i + 1) * k];
                let orow = &mut out[i * n..(i + 1) * n];
                for (p, &av) in arow.iter().enumerate() {
                    let brow = &b.data[p * n..(p + 1) * n];
                    for (o, &bv) in orow.iter_mut().zip(brow) {
                        *o += av * bv;
                    }
                }
            }
            Tensor::new(vec![m, n], out)
        }
        (2, 1) => {
            let (m, k) = (a.rows(), a.cols());
            if k != b.shape[0] {
                return Err(shape_err("matmul", format!("[{m}x{k}] x [{}]", b.shape[0])));
            }
            let mut out = vec![0.0; m];
            for i in 0..m {
                out[i] = a.data[i * k..(i + 1) * k].iter().zip(&b.data).map(|(x, y)| x * y).sum();
            }
            Tensor::new(vec![m], out)
        }
        (1, 2) => {
            let k = a.shape[0];
            let (k2, n) = (b.rows(), b.cols());
            if k != k2 {
                return Err(shape_err("matmul", format!("[{k}] x [{k2}x{n}]")));
            }
            let mut out = vec![0.0; n];
            for (p, &av) in a.data.iter().enumerate() {
                for (o, &bv) in out.iter_mut().zip(&b.data[p * n..(p + 1) * n]) {
                    *o += av * bv;
                }
            }
            Tensor::new(vec![n], out)
        }
        (1, 1) => {
            if a.shape[0] != b.shape[0] {
                return Err(shape_err("matmul", format!("[{}] . [{}]", a.shape[0], b.shape[0])));
            }
            let dot: f64 = a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum();
            Ok(Tensor::scalar(dot))
        }
        (ra, rb) => Err(shape_err("matmul", format!("unsupported ranks {ra} x {rb}"))),
    }
}

/// Broadcasting classes shared by `add`/`mul`: identical shapes, matrix with
/// a row vector (`[K x J] (+|*) [J]`), or anything with a scalar.
enum Broadcast {
    Same,
    MatRow,
    WithScalarRhs,
    WithScalarLhs,
}

fn classify(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast, TensorError> {
    if a.shape == b.shape {
        return Ok(Broadcast::Same);
    }
    if b.rank() == 0 {
        return Ok(Broadcast::WithScalarRhs);
    }
    if a.rank() == 0 {
        return Ok(Broadcast::WithScalarLhs);
    }
    if a.rank() == 2 && b.rank() == 1 && a.cols() == b.shape[0] {
        return Ok(Broadcast::MatRow);
    }
    Err(shape_err(op, format!("{:?} vs {:?}", a.shape, b.shape)))
}

pub(crate) fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    let out = match classify("add", a, b)? {
        Broadcast::Same => a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
        Broadcast::WithScalarRhs => a.data.iter().map(|x| x + b.data[0]).collect(),
        Broadcast::WithScalarLhs => b.data.iter().map(|y| a.data[0] + y).collect(),
        Broadcast::MatRow => {
            let cols = a.cols();
            a.data.iter().enumerate().map(|(i, x)| x + b.data[i % cols]).collect()
        }
    };
    let shape = if a.rank() >= b.rank() { a.shape.clone() } else { b.shape.clone() };
    Tensor::new(shape, out)
}

pub(crate) fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    let out = match classify("mul", a, b)? {
        Broadcast::Same => a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
        Broadcast::WithScalarRhs => a.data.iter().map(|x| x * b.data[0]).collect(),
        Broadcast::WithScalarLhs => b.data.iter().map(|y| a.data[0] * y).collect(),
        Broadcast::MatRow => {
            let cols = a.cols();
            a.data.iter().enumerate().map(|(i, x)| x * b.data[i % cols]).collect()
        }
    };
    let shape = if a.rank() >= b.rank() { a.shape.clone() } else { b.shape.clone() };
    Tensor::new(shape, out)
}

pub(crate) fn add_col(m: &Tensor, col: &Tensor) -> Result<Tensor, TensorError> {
    if m.rank() != 2 || col.rank() != 1 || m.rows() != col.shape[0] {
        return Err(shape_err("add_col", format!("{:?} vs {:?}", m.shape, col.shape)));
    }
    let cols = m.cols();
    let data = m.data.iter().enumerate().map(|(i, x)| x + col.data[i / cols]).collect();
    Tensor::new(m.shape.clone(), data)
}

pub(crate) fn concat(inputs: &[&Tensor], axis: usize) -> Result<Tensor, TensorError> {
    let rank = inputs[0].rank();
    if inputs.iter().any(|t| t.rank() != rank) {
        return Err(shape_err("concat", "mixed ranks".into()));
    }
    match (rank, axis) {
        (1, 0) => {
            let mut data = Vec::new();
            for t in inputs {
                data.extend_from_slice(&t.data);
            }
            Ok(Tensor::from_vec(data))
        }
        (2, 0) => {
            let cols = inputs[0].cols();
            if inputs.iter().any(|t| t.cols() != cols) {
                return Err(shape_err("concat", "column counts differ".into()));
            }
            let rows: usize = inputs.iter().map(|t| t.rows()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for t in inputs {
                data.extend_from_slice(&t.data);
            }
            Tensor::new(vec![rows, cols], data)
        }
        (2, 1) => {
            let rows = inputs[0].rows();
            if inputs.iter().any(|t| t.rows() != rows) {
                return Err(shape_err("concat", "row counts differ".into()));
            }
            let cols: usize = inputs.iter().map(|t| t.cols()).sum();
            let mut data = vec![0.0; rows * cols];
            for r in 0..rows {
                let mut off = 0;
                for t in inputs {
                    let c = t.cols();
                    data[r * cols + off..r * cols + off + c]
                        .copy_from_slice(&t.data[r * c..(r + 1) * c]);
                    off += c;
                }
            }
            Tensor::new(vec![rows, cols], data)
        }
        _ => Err(shape_err("concat", format!("rank {rank} axis {axis}"))),
    }
}

pub(crate) fn stack(inputs: &[&Tensor]) -> Result<Tensor, TensorError> {
    let rank = inputs[0].rank();
    if inputs.iter().any(|t| t.rank() != rank) {
        return Err(shape_err("stack", "mixed ranks".into()));
    }
    match rank {
        0 => {
            let data: Vec<f64> = inputs.iter().map(|t| t.data[0]).collect();
            Ok(Tensor::from_vec(data))
        }
        1 => {
            let d = inputs[0].shape[0];
            if inputs.iter().any(|t| t.shape[0] != d) {
                return Err(shape_err("stack", "vector lengths differ".into()));
            }
            let mut data = Vec::with_capacity(inputs.len() * d);
            for t in inputs {
                data.extend_from_slice(&t.data);
            }
            Tensor::new(vec![inputs.len(), d], data)
        }
        _ => Err(shape_err("stack", format!("rank {rank} inputs"))),
    }
}

pub(crate) fn slice(x: &Tensor, axis: usize, start: usize, end: usize) -> Result<Tensor, TensorError> {
    if start >= end {
        return Err(shape_err("slice", format!("empty range [{start}, {end})")));
    }
    match (x.rank(), axis) {
        (1, 0) => {
            if end > x.shape[0] {
                return Err(shape_err("slice", format!("[{start},{end}) of [{}]", x.shape[0])));
            }
            Ok(Tensor::from_vec(x.data[start..end].to_vec()))
        }
        (2, 0) => {
            let (rows, cols) = (x.rows(), x.cols());
            if end > rows {
                return Err(shape_err("slice", format!("rows [{start},{end}) of [{rows}x{cols}]")));
            }
            Tensor::new(vec![end - start, cols], x.data[start * cols..end * cols].to_vec())
        }
        (2, 1) => {
            let (rows, cols) = (x.rows(), x.cols());
            if end > cols {
                return Err(shape_err("slice", format!("cols [{start},{end}) of [{rows}x{cols}]")));
            }
            let w = end - start;
            let mut data = Vec::with_capacity(rows * w);
            for r in 0..rows {
                data.extend_from_slice(&x.data[r * cols + start..r * cols + end]);
            }
            Tensor::new(vec![rows, w], data)
        }
        (r, a) => Err(shape_err("slice", format!("rank {r} axis {a}"))),
    }
}

pub(crate) fn sum_all(x: &Tensor) -> Tensor {
    Tensor::scalar(x.data.iter().sum())
}

pub(crate) fn mean_all(x: &Tensor) -> Tensor {
    Tensor::scalar(x.data.iter().sum::<f64>() / x.numel() as f64)
}

/// Rows of a matrix (or one whole vector) treated as independent softmax
/// groups, stabilized by max subtraction.
fn last_dim_groups(x: &Tensor) -> Result<(usize, usize), TensorError> {
    match x.rank() {
        1 => Ok((1, x.shape[0])),
        2 => Ok((x.rows(), x.cols())),
        r => Err(shape_err("softmax_lastdim", format!("rank {r}"))),
    }
}

pub(crate) fn softmax_last(x: &Tensor) -> Result<Tensor, TensorError> {
    let (groups, width) = last_dim_groups(x)?;
    let mut data = vec![0.0; x.numel()];
    for gi in 0..groups {
        let row = &x.data[gi * width..(gi + 1) * width];
        let out = &mut data[gi * width..(gi + 1) * width];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (o, &v) in out.iter_mut().zip(row) {
            *o = (v - mx).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }
    Tensor::new(x.shape.clone(), data)
}

pub(crate) fn log_softmax_last(x: &Tensor) -> Result<Tensor, TensorError> {
    let (groups, width) = last_dim_groups(x)?;
    let mut data = vec![0.0; x.numel()];
    for gi in 0..groups {
        let row = &x.data[gi * width..(gi + 1) * width];
        let out = &mut data[gi * width..(gi + 1) * width];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|&v| (v - mx).exp()).sum::<f64>().ln() + mx;
        for (o, &v) in out.iter_mut().zip(row) {
            *o = v - lse;
        }
    }
    Tensor::new(x.shape.clone(), data)
}

pub(crate) fn softmax_masked(x: &Tensor, mask: &[bool]) -> Result<Tensor, TensorError> {
    if x.rank() != 1 {
        return Err(shape_err("softmax_masked", format!("rank {}", x.rank())));
    }
    if mask.len() != x.shape[0] {
        return Err(shape_err("softmax_masked", "mask length differs from input".into()));
    }
    if !mask.iter().any(|&m| m) {
        return Err(TensorError::Contract("softmax_masked: every entry is masked out".into()));
    }
    let mx = x
        .data
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut data = vec![0.0; x.shape[0]];
    let mut z = 0.0;
    for i in 0..data.len() {
        if mask[i] {
            data[i] = (x.data[i] - mx).exp();
            z += data[i];
        }
    }
    for (i, d) in data.iter_mut().enumerate() {
        if mask[i] {
            *d /= z;
        }
    }
    Tensor::new(x.shape.clone(), data)
}

pub(crate) fn reshape(x: &Tensor, shape: &[usize]) -> Result<Tensor, TensorError> {
    let numel: usize = shape.iter().product();
    if numel != x.numel() {
        return Err(shape_err("reshape", format!("{:?} -> {:?}", x.shape, shape)));
    }
    Tensor::new(shape.to_vec(), x.data.clone())
}

pub(crate) fn transpose(x: &Tensor) -> Result<Tensor, TensorError> {
    if x.rank() != 2 {
        return Err(shape_err("transpose", format!("rank {}", x.rank())));
    }
    let (rows, cols) = (x.rows(), x.cols());
    let mut data = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            data[c * rows + r] = x.data[r * cols + c];
        }
    }
    Tensor::new(vec![cols, rows], data)
}

pub(crate) fn unfold(x: &Tensor, width: usize) -> Result<Tensor, TensorError> {
    if x.rank() != 2 {
        return Err(shape_err("unfold", format!("rank {}", x.rank())));
    }
    let (rows, cols) = (x.rows(), x.cols());
    if width == 0 || width > rows {
        return Err(shape_err("unfold", format!("width {width} over {rows} rows")));
    }
    let out_rows = rows - width + 1;
    let mut data = Vec::with_capacity(out_rows * width * cols);
    for r in 0..out_rows {
        data.extend_from_slice(&x.data[r * cols..(r + width) * cols]);
    }
    Tensor::new(vec![out_rows, width * cols], data)
}

pub(crate) fn row_max(x: &Tensor) -> Result<(Tensor, Vec<usize>), TensorError> {
    if x.rank() != 2 {
        return Err(shape_err("row_max", format!("rank {}", x.rank())));
    }
    let (rows, cols) = (x.rows(), x.cols());
    let mut out = vec![f64::NEG_INFINITY; rows];
    let mut arg = vec![0; rows];
    for r in 0..rows {
        for c in 0..cols {
            let v = x.data[r * cols + c];
            if v > out[r] {
                out[r] = v;
                arg[r] = c;
            }
        }
    }
    Ok((Tensor::from_vec(out), arg))
}

pub(crate) fn col_max(x: &Tensor) -> Result<(Tensor, Vec<usize>), TensorError> {
    if x.rank() != 2 {
        return Err(shape_err("col_max", format!("rank {}", x.rank())));
    }
    let (rows, cols) = (x.rows(), x.cols());
    let mut out = vec![f64::NEG_INFINITY; cols];
    let mut arg = vec![0; cols];
    for r in 0..rows {
        for c in 0..cols {
            let v = x.data[r * cols + c];
            if v > out[c] {
                out[c] = v;
                arg[c] = r;
            }
        }
    }
    Ok((Tensor::new(vec![cols], out)?, arg))
}

pub(crate) fn embedding_lookup(table: &Tensor, indices: &[usize]) -> Result<Tensor, TensorError> {
    if table.rank() != 2 {
        return Err(shape_err("embedding_lookup", format!("table rank {}", table.rank())));
    }
    let (v, d) = (table.rows(), table.cols());
    let mut data = Vec::with_capacity(indices.len() * d);
    for &i in indices {
        if i >= v {
            return Err(shape_err("embedding_lookup", format!("index {i} >= table rows {v}")));
        }
        data.extend_from_slice(&table.data[i * d..(i + 1) * d]);
    }
    Tensor::new(vec![indices.len(), d], data)
}

/// Accumulate `f`'s contribution into the gradient buffer of node `id`.
fn acc(
    grads: &mut [Option<Vec<f64>>],
    values: &[Tensor],
    id: usize,
    f: impl FnOnce(&mut [f64]),
) {
    if !values[id].requires_grad {
        return;
    }
    let buf = grads[id].get_or_insert_with(|| vec![0.0; values[id].numel()]);
    f(buf);
}

/// Apply the gradient rule of the operation that produced node `i`,
/// accumulating into its inputs. `g` is dL/d(node i).
pub(crate) fn backward_step(
    op: &Op,
    g: &[f64],
    values: &[Tensor],
    grads: &mut [Option<Vec<f64>>],
    i: usize,
) -> Result<(), TensorError> {
    match op {
        Op::Leaf => {}
        Op::Matmul(a, b) => {
            let (ta, tb) = (&values[a.0], &values[b.0]);
            match (ta.rank(), tb.rank()) {
                (2, 2) => {
                    let (m, k) = (ta.rows(), ta.cols());
                    let n = tb.cols();
                    acc(grads, values, a.0, |da| {
                        for r in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for c in 0..n {
                                    s += g[r * n + c] * tb.data[p * n + c];
                                }
                                da[r * k + p] += s;
                            }
                        }
                    });
                    acc(grads, values, b.0, |db| {
                        for p in 0..k {
                            for c in 0..n {
                                let mut s = 0.0;
                                for r in 0..m {
                                    s += ta.data[r * k + p] * g[r * n + c];
                                }
                                db[p * n + c] += s;
                            }
                        }
                    });
                }
                (2, 1) => {
                    let (m, k) = (ta.rows(), ta.cols());
                    acc(grads, values, a.0, |da| {
                        for r in 0..m {
                            for p in 0..k {
                                da[r * k + p] += g[r] * tb.data[p];
                            }
                        }
                    });
                    acc(grads, values, b.0, |db| {
                        for p in 0..k {
                            let mut s = 0.0;
                            for r in 0..m {
                                s += ta.data[r * k + p] * g[r];
                            }
                            db[p] += s;
                        }
                    });
                }
                (1, 2) => {
                    let k = ta.shape[0];
                    let n = tb.cols();
                    acc(grads, values, a.0, |da| {
                        for p in 0..k {
                            let mut s = 0.0;
                            for c in 0..n {
                                s += tb.data[p * n + c] * g[c];
                            }
                            da[p] += s;
                        }
                    });
                    acc(grads, values, b.0, |db| {
                        for p in 0..k {
                            for c in 0..n {
                                db[p * n + c] += ta.data[p] * g[c];
                            }
                        }
                    });
                }
                (1, 1) => {
                    acc(grads, values, a.0, |da| {
                        for (d, &bv) in da.iter_mut().zip(&tb.data) {
                            *d += g[0] * bv;
                        }
                    });
                    acc(grads, values, b.0, |db| {
                        for (d, &av) in db.iter_mut().zip(&ta.data) {
                            *d += g[0] * av;
                        }
                    });
                }
                _ => unreachable!("matmul forward validated ranks"),
            }
        }
        Op::Add(a, b) => {
            let (ta, tb) = (&values[a.0], &values[b.0]);
            match classify("add", ta, tb).expect("validated in forward") {
                Broadcast::Same => {
                    acc(grads, values, a.0, |da| da.iter_mut().zip(g).for_each(|(d, &v)| *d += v));
                    acc(grads, values, b.0, |db| db.iter_mut().zip(g).for_each(|(d, &v)| *d += v));
                }
                Broadcast::WithScalarRhs => {
                    acc(grads, values, a.0, |da| da.iter_mut().zip(g).for_each(|(d, &v)| *d += v));
                    acc(grads, values, b.0, |db| db[0] += g.iter().sum::<f64>());
                }
                Broadcast::WithScalarLhs => {
                    acc(grads, values, a.0, |da| da[0] += g.iter().sum::<f64>());
                    acc(grads, values, b.0, |db| db.iter_mut().zip(g).for_each(|(d, &v)| *d += v));
                }
                Broadcast::MatRow => {
                    let cols = ta.cols();
                    acc(grads, values, a.0, |da| da.iter_mut().zip(g).for_each(|(d, &v)| *d += v));
                    acc(grads, values, b.0, |db| {
                        for (idx, &v) in g.iter().enumerate() {
                            db[idx % cols] += v;
                        }
                    });
                }
            }
        }
        Op::Mul(a, b) => {
            let (ta, tb) = (&values[a.0], &values[b.0]);
            match classify("mul", ta, tb).expect("validated in forward") {
                Broadcast::Same => {
                    acc(grads, values, a.0, |da| {
                        for ((d, &v), &bv) in da.iter_mut().zip(g).zip(&tb.data) {
                            *d += v * bv;
                        }
                    });
                    acc(grads, values, b.0, |db| {
                        for ((d, &v), &av) in db.iter_mut().zip(g).zip(&ta.data) {
                            *d += v * av;
                        }
                    });
                }
                Broadcast::WithScalarRhs => {
                    acc(grads, values, a.0, |da| {
                        for (d, &v) in da.iter_mut().zip(g) {
                            *d += v * tb.data[0];
                        }
                    });
                    acc(grads, values, b.0, |db| {
                        db[0] += g.iter().zip(&ta.data).map(|(&v, &av)| v * av).sum::<f64>();
                    });
                }
                Broadcast::WithScalarLhs => {
                    acc(grads, values, a.0, |da| {
                        da[0] += g.iter().zip(&tb.data).map(|(&v, &bv)| v * bv).sum::<f64>();
                    });
                    acc(grads, values, b.0, |db| {
                        for (d, &v) in db.iter_mut().zip(g) {
                            *d += v * ta.data[0];
                        }
                    });
                }
                Broadcast::MatRow => {
                    let cols = ta.cols();
                    acc(grads, values, a.0, |da| {
                        for (idx, (d, &v)) in da.iter_mut().zip(g).enumerate() {
                            *d += v * tb.data[idx % cols];
                        }
                    });
                    acc(grads, values, b.0, |db| {
                        for (idx, &v) in g.iter().enumerate() {
                            db[idx % cols] += v * ta.data[idx];
                        }
                    });
                }
            }
        }
        Op::AddCol(m, col) => {
            let cols = values[m.0].cols();
            acc(grads, values, m.0, |dm| dm.iter_mut().zip(g).for_each(|(d, &v)| *d += v));
            acc(grads, values, col.0, |dc| {
                for (idx, &v) in g.iter().enumerate() {
                    dc[idx / cols] += v;
                }
            });
        }
        Op::Concat { axis, inputs } => {
            let rank = values[inputs[0].0].rank();
            match (rank, axis) {
                (1, 0) | (2, 0) => {
                    let mut off = 0;
                    for v in inputs {
                        let n = values[v.0].numel();
                        let seg = &g[off..off + n];
                        acc(grads, values, v.0, |dv| {
                            dv.iter_mut().zip(seg).for_each(|(d, &gv)| *d += gv)
                        });
                        off += n;
                    }
                }
                (2, 1) => {
                    let rows = values[inputs[0].0].rows();
                    let total_cols: usize = inputs.iter().map(|v| values[v.0].cols()).sum();
                    let mut off = 0;
                    for v in inputs {
                        let c = values[v.0].cols();
                        acc(grads, values, v.0, |dv| {
                            for r in 0..rows {
                                for j in 0..c {
                                    dv[r * c + j] += g[r * total_cols + off + j];
                                }
                            }
                        });
                        off += c;
                    }
                }
                _ => unreachable!("concat forward validated"),
            }
        }
        Op::Stack { inputs } => {
            let width = values[i].numel() / inputs.len();
            for (r, v) in inputs.iter().enumerate() {
                let seg = &g[r * width..(r + 1) * width];
                acc(grads, values, v.0, |dv| dv.iter_mut().zip(seg).for_each(|(d, &gv)| *d += gv));
            }
        }
        Op::Slice { input, axis, start, end } => {
            let t = &values[input.0];
            match (t.rank(), axis) {
                (1, 0) => acc(grads, values, input.0, |dv| {
                    dv[*start..*end].iter_mut().zip(g).for_each(|(d, &gv)| *d += gv)
                }),
                (2, 0) => {
                    let cols = t.cols();
                    acc(grads, values, input.0, |dv| {
                        dv[start * cols..end * cols]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(d, &gv)| *d += gv)
                    });
                }
                (2, 1) => {
                    let (rows, cols) = (t.rows(), t.cols());
                    let w = end - start;
                    acc(grads, values, input.0, |dv| {
                        for r in 0..rows {
                            for j in 0..w {
                                dv[r * cols + start + j] += g[r * w + j];
                            }
                        }
                    });
                }
                _ => unreachable!("slice forward validated"),
            }
        }
        Op::Sum(input) => {
            acc(grads, values, input.0, |dv| dv.iter_mut().for_each(|d| *d += g[0]));
        }
        Op::Mean(input) => {
            let n = values[input.0].numel() as f64;
            acc(grads, values, input.0, |dv| dv.iter_mut().for_each(|d| *d += g[0] / n));
        }
        Op::Tanh(input) => {
            let y = &values[i].data;
            acc(grads, values, input.0, |dv| {
                for ((d, &gv), &yv) in dv.iter_mut().zip(g).zip(y) {
                    *d += gv * (1.0 - yv * yv);
                }
            });
        }
        Op::Sigmoid(input) => {
            let y = &values[i].data;
            acc(grads, values, input.0, |dv| {
                for ((d, &gv), &yv) in dv.iter_mut().zip(g).zip(y) {
                    *d += gv * yv * (1.0 - yv);
                }
            });
        }
        Op::Relu(input) => {
            let x = &values[input.0].data;
            acc(grads, values, input.0, |dv| {
                for ((d, &gv), &xv) in dv.iter_mut().zip(g).zip(x) {
                    if xv > 0.0 {
                        *d += gv;
                    }
                }
            });
        }
        Op::Log(input) => {
            let x = &values[input.0].data;
            acc(grads, values, input.0, |dv| {
                for ((d, &gv), &xv) in dv.iter_mut().zip(g).zip(x) {
                    *d += gv / xv;
                }
            });
        }
        Op::SoftmaxLast(input) => {
            let y = &values[i];
            let (groups, width) = last_dim_groups(y).expect("validated");
            acc(grads, values, input.0, |dv| {
                for gi in 0..groups {
                    let s = &y.data[gi * width..(gi + 1) * width];
                    let gr = &g[gi * width..(gi + 1) * width];
                    let dot: f64 = s.iter().zip(gr).map(|(&sv, &gv)| sv * gv).sum();
                    for j in 0..width {
                        dv[gi * width + j] += s[j] * (gr[j] - dot);
                    }
                }
            });
        }
        Op::LogSoftmaxLast(input) => {
            let y = &values[i];
            let (groups, width) = last_dim_groups(y).expect("validated");
            acc(grads, values, input.0, |dv| {
                for gi in 0..groups {
                    let yrow = &y.data[gi * width..(gi + 1) * width];
                    let gr = &g[gi * width..(gi + 1) * width];
                    let gsum: f64 = gr.iter().sum();
                    for j in 0..width {
                        dv[gi * width + j] += gr[j] - yrow[j].exp() * gsum;
                    }
                }
            });
        }
        Op::SoftmaxMasked { input, mask } => {
            let s = &values[i].data;
            acc(grads, values, input.0, |dv| {
                let dot: f64 = s
                    .iter()
                    .zip(g)
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|((&sv, &gv), _)| sv * gv)
                    .sum();
                for j in 0..s.len() {
                    if mask[j] {
                        dv[j] += s[j] * (g[j] - dot);
                    }
                }
            });
        }
        Op::AffineScalar { input, scale } => {
            acc(grads, values, input.0, |dv| {
                for (d, &gv) in dv.iter_mut().zip(g) {
                    *d += scale * gv;
                }
            });
        }
        Op::Reshape(input) => {
            acc(grads, values, input.0, |dv| dv.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv));
        }
        Op::Transpose(input) => {
            let (rows, cols) = (values[i].rows(), values[i].cols());
            acc(grads, values, input.0, |dv| {
                for r in 0..rows {
                    for c in 0..cols {
                        dv[c * rows + r] += g[r * cols + c];
                    }
                }
            });
        }
        Op::Unfold { input, width } => {
            let cols = values[input.0].cols();
            let out_rows = values[i].rows();
            acc(grads, values, input.0, |dv| {
                for r in 0..out_rows {
                    for w in 0..*width {
                        for c in 0..cols {
                            dv[(r + w) * cols + c] += g[r * width * cols + w * cols + c];
                        }
                    }
                }
            });
        }
        Op::RowMax { input, argmax } => {
            let cols = values[input.0].cols();
            acc(grads, values, input.0, |dv| {
                for (r, &c) in argmax.iter().enumerate() {
                    dv[r * cols + c] += g[r];
                }
            });
        }
        Op::ColMax { input, argmax } => {
            let cols = values[input.0].cols();
            acc(grads, values, input.0, |dv| {
                for (c, &r) in argmax.iter().enumerate() {
                    dv[r * cols + c] += g[c];
                }
            });
        }
        Op::EmbeddingLookup { table, indices } => {
            let d = values[table.0].cols();
            acc(grads, values, table.0, |dt| {
                for (r, &idx) in indices.iter().enumerate() {
                    for c in 0..d {
                        dt[idx * d + c] += g[r * d + c];
                    }
                }
            });
        }
        Op::Dropout { input, mask } => {
            acc(grads, values, input.0, |dv| {
                for ((d, &gv), &m) in dv.iter_mut().zip(g).zip(mask) {
                    *d += gv * m;
                }
            });
        }
    }
    Ok(())
}
