//! Reverse-mode differentiation tape.
//!
//! Every operation appends a node holding its forward value and, when any
//! input requires a gradient, a vector-Jacobian product closure. Inputs are
//! never mutated; values are shared through `Rc`.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};

use super::map::{MapShape, SphereMap};
use super::param::Parameter;

/// A node value: a sphere map or a flat vector (parameters, scalars).
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Map(SphereMap),
    Flat(Vec<f64>),
}

impl Value {
    pub fn data(&self) -> &[f64] {
        match self {
            Value::Map(m) => m.data(),
            Value::Flat(v) => v,
        }
    }

    pub fn len(&self) -> usize {
        self.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.data().is_empty()
    }

    pub fn as_map(&self) -> Option<&SphereMap> {
        match self {
            Value::Map(m) => Some(m),
            Value::Flat(_) => None,
        }
    }

    pub fn map_shape(&self) -> Option<MapShape> {
        self.as_map().map(|m| m.shape())
    }

    fn same_shape(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Map(a), Value::Map(b)) => a.shape() == b.shape(),
            (Value::Flat(a), Value::Flat(b)) => a.len() == b.len(),
            _ => false,
        }
    }

    /// Same kind and shape as `self`, new data.
    pub(crate) fn like(&self, data: Vec<f64>) -> Value {
        match self {
            Value::Map(m) => Value::Map(SphereMap::from_parts_unchecked(m.shape(), data)),
            Value::Flat(_) => Value::Flat(data),
        }
    }

    fn describe(&self) -> String {
        match self {
            Value::Map(m) => format!("{:?}", m.shape()),
            Value::Flat(v) => format!("flat[{}]", v.len()),
        }
    }
}

/// VJP: receives the output gradient and which parents need a gradient,
/// returns one entry per parent (`None` for no contribution).
type BackwardFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>>>;

struct Node {
    value: Rc<Value>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Ordered record of operations. Confined to one thread.
///
/// In debug builds every recorded value is asserted finite unless the tape
/// was created with [`Tape::unchecked`].
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    check_finite: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Tape { nodes: RefCell::new(Vec::new()), check_finite: true }
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {}", self.id, self.value().describe())
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// A tape that lets non-finite values through; the caller checks.
    pub fn unchecked() -> Self {
        Tape { check_finite: false, ..Tape::default() }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Value, parents: Vec<usize>, backward: Option<BackwardFn>, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), parents, backward, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// Input that carries no gradient.
    pub fn constant(&self, value: Value) -> Var<'_> {
        self.push(value, Vec::new(), None, false)
    }

    pub fn constant_map(&self, map: SphereMap) -> Var<'_> {
        self.constant(Value::Map(map))
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Value::Flat(vec![v]))
    }

    /// Input whose gradient is reported by [`Tape::backward`].
    pub fn leaf(&self, value: Value) -> Var<'_> {
        self.push(value, Vec::new(), None, true)
    }

    pub fn leaf_map(&self, map: SphereMap) -> Var<'_> {
        self.leaf(Value::Map(map))
    }

    /// Binds a parameter's current values as a differentiable leaf.
    pub fn param(&self, p: &Parameter) -> Var<'_> {
        self.leaf(Value::Flat(p.values().to_vec()))
    }

    /// Appends an operation result. The closure is kept only when some
    /// parent requires a gradient.
    pub(crate) fn record<'t>(
        &'t self,
        value: Value,
        parents: &[Var<'t>],
        backward: impl Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + 'static,
    ) -> Var<'t> {
        debug_assert!(
            !self.check_finite || value.data().iter().all(|v| v.is_finite()),
            "non-finite value recorded on tape"
        );
        let ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
        let requires_grad = {
            let nodes = self.nodes.borrow();
            ids.iter().any(|&i| nodes[i].requires_grad)
        };
        let backward: Option<BackwardFn> = requires_grad.then(|| Box::new(backward) as BackwardFn);
        self.push(value, ids, backward, requires_grad)
    }

    /// Reverse pass seeded with `d(loss)/d(loss) = 1`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::ForeignTape);
        }
        let nodes = self.nodes.borrow();
        let n_loss = nodes[loss.id].value.len();
        if n_loss != 1 {
            return Err(Error::NotScalar(n_loss));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let Some(bw) = &node.backward else {
                // leaf: keep its gradient
                grads[id] = Some(g);
                continue;
            };
            let needs: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let contribs = bw(&g, &needs);
            debug_assert_eq!(contribs.len(), node.parents.len());
            for ((&pid, contrib), need) in node.parents.iter().zip(contribs).zip(needs) {
                let Some(c) = contrib else { continue };
                if !need {
                    continue;
                }
                match &mut grads[pid] {
                    Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(c),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of the loss with respect to the tape's leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf. Leaves the loss does not depend on get zeros.
    pub fn wrt(&self, v: Var<'_>) -> Vec<f64> {
        match self.grads.get(v.id).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => vec![0.0; v.len()],
        }
    }

    /// Adds the gradient of `v` into `p.grad`.
    pub fn accumulate(&self, v: Var<'_>, p: &mut Parameter) {
        if let Some(Some(g)) = self.grads.get(v.id) {
            p.accumulate_grad(g);
        }
    }
}

fn binary_shape_check(op: &'static str, a: &Value, b: &Value) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!("{op}: {} vs {}", a.describe(), b.describe())))
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Value> {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn len(&self) -> usize {
        self.tape.nodes.borrow()[self.id].value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Clone of the value as a sphere map.
    pub fn to_map(&self) -> Result<SphereMap> {
        self.value()
            .as_map()
            .cloned()
            .ok_or_else(|| Error::ShapeMismatch("expected a sphere map, found a flat value".into()))
    }

    pub fn map_shape(&self) -> Result<MapShape> {
        self.value()
            .map_shape()
            .ok_or_else(|| Error::ShapeMismatch("expected a sphere map, found a flat value".into()))
    }

    /// Value of a one-element var.
    pub fn item(&self) -> f64 {
        self.value().data()[0]
    }

    fn same_tape(&self, other: &Var<'t>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::ForeignTape)
        }
    }

    /// Pointwise map with derivative `df(x, y)`.
    fn unary(self, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Var<'t> {
        let x = self.value();
        let y: Vec<f64> = x.data().iter().map(|&v| f(v)).collect();
        let out = x.like(y);
        let y_saved = Rc::new(out.data().to_vec());
        let x_saved = x.clone();
        self.tape.record(out, &[self], move |g, _| {
            let gx = g
                .iter()
                .zip(x_saved.data())
                .zip(y_saved.iter())
                .map(|((g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(gx)]
        })
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        binary_shape_check("add", &a, &b)?;
        let y = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        Ok(self.tape.record(a.like(y), &[self, other], |g, _| vec![Some(g.to_vec()), Some(g.to_vec())]))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        binary_shape_check("sub", &a, &b)?;
        let y = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        Ok(self.tape.record(a.like(y), &[self, other], |g, _| {
            vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())]
        }))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        binary_shape_check("mul", &a, &b)?;
        let y = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        let out = a.like(y);
        Ok(self.tape.record(out, &[self, other], move |g, needs| {
            let ga = needs[0].then(|| g.iter().zip(b.data()).map(|(g, y)| g * y).collect());
            let gb = needs[1].then(|| g.iter().zip(a.data()).map(|(g, x)| g * x).collect());
            vec![ga, gb]
        }))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(move |x| c * x, move |_, _| c)
    }

    /// Adds a constant to every element.
    pub fn offset(self, c: f64) -> Var<'t> {
        self.unary(move |x| x + c, |_, _| 1.0)
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn abs(self) -> Var<'t> {
        self.unary(f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn square(self) -> Var<'t> {
        self.unary(|x| x * x, |x, _| 2.0 * x)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(f64::exp, |_, y| y)
    }

    pub fn log(self) -> Result<Var<'t>> {
        if let Some(bad) = self.value().data().iter().find(|&&v| v <= 0.0) {
            return Err(Error::Domain { op: "log", detail: format!("argument {bad} is not positive") });
        }
        Ok(self.unary(f64::ln, |x, _| 1.0 / x))
    }

    pub fn sqrt(self) -> Result<Var<'t>> {
        if let Some(bad) = self.value().data().iter().find(|&&v| v < 0.0) {
            return Err(Error::Domain { op: "sqrt", detail: format!("argument {bad} is negative") });
        }
        Ok(self.unary(f64::sqrt, |_, y| 0.5 / y))
    }

    pub fn sum(self) -> Var<'t> {
        let x = self.value();
        let n = x.len();
        let s = x.data().iter().sum();
        self.tape.record(Value::Flat(vec![s]), &[self], move |g, _| vec![Some(vec![g[0]; n])])
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.len();
        self.sum().scale(1.0 / n as f64)
    }

    /// Maximum element; the gradient goes to the first maximal index.
    pub fn max(self) -> Var<'t> {
        let x = self.value();
        let n = x.len();
        let (arg, m) = x
            .data()
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(ai, am), (i, &v)| if v > am { (i, v) } else { (ai, am) });
        self.tape.record(Value::Flat(vec![m]), &[self], move |g, _| {
            let mut gx = vec![0.0; n];
            gx[arg] = g[0];
            vec![Some(gx)]
        })
    }

    /// `self + c * other` with a constant `c`.
    pub fn add_scaled(self, other: Var<'t>, c: f64) -> Result<Var<'t>> {
        self.add(other.scale(c))
    }
}
