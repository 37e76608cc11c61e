use super::types::*;
use crate::data_io::DataHeader;

/// Output extent of a convolution along one axis, or `None` when the padded
/// input is smaller than the kernel.
pub fn conv_out(n: usize, pad: usize, k: usize, stride: usize) -> Option<usize> {
    let padded = n + 2 * pad;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Output extent of non-overlapping pooling along one axis (ragged border dropped).
pub fn pool_out(n: usize, size: usize) -> Option<usize> {
    if size == 0 || n < size {
        return None;
    }
    Some(n / size)
}

/// Fills `shape` for every layer of `graph` along its topological order, and
/// binds FI dimensions and autoencoder targets. `earlier` holds the networks
/// declared before this one (index `net`), whose shapes are already known.
pub fn infer_shapes(
    graph: &mut NetworkGraph,
    net: usize,
    tr: &DataHeader,
    earlier: &[NetworkGraph],
) -> Result<(), Vec<Diagnostic>> {
    let mut errors = Vec::new();
    let order = graph.topo_order.clone();
    let mut known = vec![true; graph.layers.len()];
    for i in order {
        if graph.layers[i].parents.iter().any(|p| p.net == net && !known[p.layer]) {
            known[i] = false;
            continue;
        }
        let shape = {
            let lookup = |id: LayerId| -> &ResolvedLayer {
                if id.net == net {
                    &graph.layers[id.layer]
                } else {
                    &earlier[id.net].layers[id.layer]
                }
            };
            let layer = &graph.layers[i];
            let parents: Vec<(&str, Shape)> = layer.parents.iter().map(|p| (lookup(*p).name.as_str(), lookup(*p).shape)).collect();
            let name = &layer.name;
            let fail = |msg: String| Diagnostic::new(Code::E007, layer.span, msg);
            let flat = |what: &str| -> Result<usize, Diagnostic> {
                let mut total = 0;
                for (pname, s) in &parents {
                    match s {
                        Shape::Flat(d) => total += d,
                        Shape::Map { .. } => {
                            return Err(fail(format!(
                                "{what} `{name}` needs flat input but parent `{pname}` produces a {s} map; insert `F reshape []`"
                            )))
                        }
                    }
                }
                Ok(total)
            };
            let map = |what: &str| -> Result<(usize, usize, usize), Diagnostic> {
                match parents[0] {
                    (_, Shape::Map { z, r, c }) => Ok((z, r, c)),
                    (pname, s) => Err(fail(format!("{what} `{name}` needs a map input but parent `{pname}` is flat ({s})"))),
                }
            };
            let result: Result<(Shape, Option<LayerKind>), Diagnostic> = match &layer.kind {
                LayerKind::FI { .. } => Ok((Shape::Flat(tr.dim), Some(LayerKind::FI { dim: tr.dim }))),
                LayerKind::CI { nz, nr, nc, cr, cc } => {
                    if nz * nr * nc != tr.dim {
                        Err(fail(format!("CI `{name}` is {nz}x{nr}x{nc} = {} values but the training data has dimension {}", nz * nr * nc, tr.dim)))
                    } else {
                        Ok((Shape::Map { z: *nz, r: *cr, c: *cc }, None))
                    }
                }
                LayerKind::F { numnodes, .. } => flat("F").map(|_| (Shape::Flat(*numnodes), None)),
                LayerKind::Reshape => Ok((Shape::Flat(parents[0].1.size()), None)),
                LayerKind::C { nk, kr, kc, rpad, cpad, stride } => map("C").and_then(|(_, r, c)| {
                    match (conv_out(r, *rpad, *kr, *stride), conv_out(c, *cpad, *kc, *stride)) {
                        (Some(ro), Some(co)) => Ok((Shape::Map { z: *nk, r: ro, c: co }, None)),
                        _ => Err(fail(format!("C `{name}`: kernel {kr}x{kc} does not fit the padded {r}x{c} input"))),
                    }
                }),
                LayerKind::MP { sizer, sizec } => map("MP").and_then(|(z, r, c)| {
                    match (pool_out(r, *sizer), pool_out(c, *sizec)) {
                        (Some(ro), Some(co)) => Ok((Shape::Map { z, r: ro, c: co }, None)),
                        _ => Err(fail(format!("MP `{name}`: pooling {sizer}x{sizec} exceeds the {r}x{c} input"))),
                    }
                }),
                LayerKind::CA => {
                    let mut z = 0;
                    let mut rc = None;
                    let mut err = None;
                    for (pname, s) in &parents {
                        match s {
                            Shape::Map { z: pz, r, c } => {
                                z += pz;
                                match rc {
                                    None => rc = Some((*r, *c, *pname)),
                                    Some((r0, c0, first)) if (r0, c0) != (*r, *c) && err.is_none() => {
                                        err = Some(fail(format!(
                                            "CA `{name}`: parent `{pname}` is {r}x{c} but `{first}` is {r0}x{c0}"
                                        )))
                                    }
                                    _ => {}
                                }
                            }
                            Shape::Flat(_) => {
                                err.get_or_insert_with(|| fail(format!("CA `{name}` needs map inputs but parent `{pname}` is flat ({s})")));
                            }
                        }
                    }
                    match (err, rc) {
                        (Some(e), _) => Err(e),
                        (None, Some((r, c, _))) => Ok((Shape::Map { z, r, c }, None)),
                        (None, None) => Err(fail(format!("CA `{name}` has no inputs"))),
                    }
                }
                LayerKind::FO { criterion, autoencoder } => flat("FO").and_then(|_| {
                    if autoencoder.is_some() {
                        let target = input_ancestor(graph, net, earlier, i);
                        match target {
                            Some(t) => {
                                let size = lookup(t).shape.size();
                                Ok((Shape::Flat(size), Some(LayerKind::FO { criterion: *criterion, autoencoder: Some(t) })))
                            }
                            None => Err(fail(format!("autoencoder `{name}` has no input layer to reconstruct"))),
                        }
                    } else {
                        match criterion {
                            Criterion::Classification if tr.classes == 0 => {
                                Err(fail(format!("classification output `{name}` needs class labels but the training data has regression targets")))
                            }
                            Criterion::Classification => Ok((Shape::Flat(tr.classes), None)),
                            Criterion::Regression if tr.targets == 0 => {
                                Err(fail(format!("regression output `{name}` needs target values but the training data has class labels")))
                            }
                            Criterion::Regression => Ok((Shape::Flat(tr.targets), None)),
                        }
                    }
                }),
            };
            result
        };
        match shape {
            Ok((s, kind)) => {
                graph.layers[i].shape = s;
                if let Some(k) = kind {
                    graph.layers[i].kind = k;
                }
            }
            Err(e) => {
                errors.push(e);
                known[i] = false;
            }
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Input layer with the smallest id among the ancestors of layer `i`.
fn input_ancestor(graph: &NetworkGraph, net: usize, earlier: &[NetworkGraph], i: usize) -> Option<LayerId> {
    let get = |id: LayerId| if id.net == net { &graph.layers[id.layer] } else { &earlier[id.net].layers[id.layer] };
    let mut stack = vec![LayerId::new(net, i)];
    let mut seen = std::collections::HashSet::new();
    let mut best: Option<LayerId> = None;
    while let Some(id) = stack.pop() {
        if !seen.insert(id) {
            continue;
        }
        let l = get(id);
        if l.kind.is_input() {
            best = Some(best.map_or(id, |b| b.min(id)));
        }
        stack.extend(l.parents.iter().copied());
    }
    best
}
