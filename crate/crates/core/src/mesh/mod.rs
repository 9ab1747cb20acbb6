//! Interface-fitted simplicial meshes.
//!
//! [`LinearMesh`] is the straight-sided partition with region labels and facet
//! classification; [`CurvedMesh`] adds the order-k Lagrange geometry nodes
//! obtained from the isoparametric interface deformation.

mod curved;
mod generate;
mod gmsh;
mod native;
mod validate;

pub use curved::{
    build_isoparametric, interface_deformation, lift_point, lift_reference, CurvedMesh,
    CurvedTopology,
};
pub use generate::{generate_fitted_mesh, structured_box_mesh};
pub use gmsh::{import_msh, parse_msh, write_msh};
pub use native::{parse_native, read_native, write_native, write_native_linear};
pub use validate::{simplex_quality, validate, validate_linear, MeshReport, Violation, NODE_TOL, SNAP_TOL};

use crate::error::{Assumption, Error, Result};
use crate::linalg::{dist, simplex_measure, Point};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FacetKind {
    Interior,
    Interface,
    Boundary,
}

impl FacetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FacetKind::Interior => "interior",
            FacetKind::Interface => "interface",
            FacetKind::Boundary => "boundary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "interior" => Some(FacetKind::Interior),
            "interface" => Some(FacetKind::Interface),
            "boundary" => Some(FacetKind::Boundary),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    /// Sorted global vertex ids (`d` of them).
    pub vertices: Vec<usize>,
    /// Adjacent elements; the second is `None` on the outer boundary.
    pub elements: [Option<usize>; 2],
    /// For each adjacent element, the local index of the vertex opposite the facet.
    pub opposite: [usize; 2],
    pub kind: FacetKind,
}

/// Straight-sided simplicial mesh with region labels (1 = inner, 2 = outer).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMesh {
    pub dim: usize,
    pub vertices: Vec<Point>,
    /// Element connectivity, `d + 1` vertex ids per element, positively oriented.
    pub elements: Vec<Vec<usize>>,
    pub regions: Vec<u8>,
    pub facets: Vec<Facet>,
    /// Vertex belongs to at least one interface facet.
    pub on_interface: Vec<bool>,
    /// Maximum element diameter.
    pub h: f64,
}

impl LinearMesh {
    /// Builds facets and classifications from raw connectivity. Elements are
    /// reoriented to positive measure; non-conforming input is rejected.
    pub fn new(dim: usize, vertices: Vec<Point>, mut elements: Vec<Vec<usize>>, regions: Vec<u8>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Unsupported(format!("mesh dimension {dim}")));
        }
        if elements.len() != regions.len() {
            return Err(Error::Dimension("one region label per element required".into()));
        }
        for (e, el) in elements.iter_mut().enumerate() {
            if el.len() != dim + 1 {
                return Err(Error::mesh(Assumption::M1, format!("element {e} has {} vertices", el.len())));
            }
            if el.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::mesh(Assumption::M1, format!("element {e} references a missing vertex")));
            }
            let pts: Vec<Point> = el.iter().map(|&v| vertices[v]).collect();
            let m = simplex_measure(dim, &pts);
            if m == 0.0 {
                return Err(Error::mesh(Assumption::M1, format!("element {e} is degenerate")));
            }
            if m < 0.0 {
                el.swap(0, 1);
            }
        }
        if let Some(r) = regions.iter().find(|&&r| r != 1 && r != 2) {
            return Err(Error::mesh(Assumption::M4, format!("region label {r} (expected 1 or 2)")));
        }

        let mut map: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut facets: Vec<Facet> = Vec::new();
        for (e, el) in elements.iter().enumerate() {
            for opp in 0..=dim {
                let mut key: Vec<usize> = (0..=dim).filter(|&i| i != opp).map(|i| el[i]).collect();
                key.sort_unstable();
                match map.get(&key) {
                    Some(&f) => {
                        let facet = &mut facets[f];
                        if facet.elements[1].is_some() {
                            return Err(Error::mesh(
                                Assumption::M2,
                                format!("facet {key:?} shared by more than two elements"),
                            ));
                        }
                        facet.elements[1] = Some(e);
                        facet.opposite[1] = opp;
                    }
                    None => {
                        map.insert(key.clone(), facets.len());
                        facets.push(Facet {
                            vertices: key,
                            elements: [Some(e), None],
                            opposite: [opp, 0],
                            kind: FacetKind::Boundary,
                        });
                    }
                }
            }
        }
        let mut on_interface = vec![false; vertices.len()];
        for f in facets.iter_mut() {
            if let [Some(a), Some(b)] = f.elements {
                if regions[a] != regions[b] {
                    f.kind = FacetKind::Interface;
                    for &v in &f.vertices {
                        on_interface[v] = true;
                    }
                } else {
                    f.kind = FacetKind::Interior;
                }
            }
        }
        let h = elements
            .iter()
            .map(|el| diameter(el.iter().map(|&v| &vertices[v])))
            .fold(0.0, f64::max);
        Ok(Self { dim, vertices, elements, regions, facets, on_interface, h })
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_vertices(&self, e: usize) -> Vec<Point> {
        self.elements[e].iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn measure(&self, e: usize) -> f64 {
        simplex_measure(self.dim, &self.element_vertices(e))
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.measure(e)).sum()
    }

    pub fn facets_of_kind(&self, kind: FacetKind) -> impl Iterator<Item = &Facet> {
        self.facets.iter().filter(move |f| f.kind == kind)
    }

    /// Local indices of the element's vertices that lie on interface facets.
    pub fn interface_vertices(&self, e: usize) -> Vec<usize> {
        (0..=self.dim).filter(|&i| self.on_interface[self.elements[e][i]]).collect()
    }

    /// Elements with two or more vertices on the interface.
    pub fn is_interface_element(&self, e: usize) -> bool {
        self.interface_vertices(e).len() >= 2
    }

    pub fn centroid(&self, e: usize) -> Point {
        let mut c = [0.0; 3];
        for &v in &self.elements[e] {
            for i in 0..3 {
                c[i] += self.vertices[v][i];
            }
        }
        c.map(|x| x / (self.dim + 1) as f64)
    }
}

pub(crate) fn diameter<'a>(pts: impl Iterator<Item = &'a Point> + Clone) -> f64 {
    let v: Vec<&Point> = pts.collect();
    let mut d: f64 = 0.0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            d = d.max(dist(v[i], v[j]));
        }
    }
    d
}
