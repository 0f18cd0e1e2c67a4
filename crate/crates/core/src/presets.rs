//! Built-in 12-region WAN and the stock overlays used by the
//! benchmark configurations.
//!
//! Latencies are one-way milliseconds between cloud regions,
//! symmetric, in the ballpark of public inter-region measurements.
//! Chain overlays are not hand-picked: they are nearest-neighbor
//! greedy walks over the matrix from a fixed start region, so edits to
//! the matrix propagate into the overlays.

use crate::overlay::TreeOverlay;
use crate::simnet::LatencyMatrix;

pub const AWS12: &str = "\
# 12-region WAN, one-way latency in ms.
oregon,california,canada,virginia,saopaulo,ireland,london,frankfurt,mumbai,singapore,tokyo,sydney
0,10,30,35,90,62,65,70,110,82,48,70
10,0,38,30,95,68,70,73,115,87,53,72
30,38,0,8,63,35,38,45,95,105,75,100
35,30,8,0,58,33,37,44,91,105,72,98
90,95,63,58,0,88,93,98,150,160,128,155
62,68,35,33,88,0,6,13,61,87,105,125
65,70,38,37,93,6,0,8,56,83,108,130
70,73,45,44,98,13,8,0,50,77,112,140
110,115,95,91,150,61,56,50,0,28,60,75
82,87,105,105,160,87,83,77,28,0,35,46
48,53,75,72,128,105,108,112,60,35,0,52
70,72,100,98,155,125,130,140,75,46,52,0
";

pub fn aws12() -> LatencyMatrix {
    LatencyMatrix::parse(AWS12).expect("embedded matrix is well-formed")
}

/// Nearest-neighbor walk: starting from `start`, repeatedly hop to the
/// closest unvisited region (ties to the lower index). The result is a
/// rank order: element 0 gets rank 0.
pub fn greedy_chain(m: &LatencyMatrix, start: usize) -> Vec<usize> {
    let n = m.len();
    let mut order = vec![start];
    let mut visited = vec![false; n];
    visited[start] = true;
    while order.len() < n {
        let cur = *order.last().unwrap();
        let next = (0..n)
            .filter(|&r| !visited[r])
            .min_by_key(|&r| (m.ns(cur, r), r))
            .unwrap();
        visited[next] = true;
        order.push(next);
    }
    order
}

/// Chain overlay anchored in Europe: starts at frankfurt.
pub fn chain_o1() -> Vec<usize> {
    let m = aws12();
    greedy_chain(&m, m.index_of("frankfurt").unwrap())
}

/// Chain overlay anchored on the US west coast: starts at oregon.
pub fn chain_o2() -> Vec<usize> {
    let m = aws12();
    greedy_chain(&m, m.index_of("oregon").unwrap())
}

fn names() -> Vec<String> {
    aws12().regions().to_vec()
}

fn tree(edges: &[(&str, &str)]) -> TreeOverlay {
    let e: Vec<(String, String)> = edges
        .iter()
        .map(|(c, p)| (c.to_string(), p.to_string()))
        .collect();
    TreeOverlay::new(names(), &e).expect("preset tree is well-formed")
}

/// Three-level tree rooted in frankfurt, with saopaulo relaying the
/// Americas and mumbai relaying Asia-Pacific.
pub fn tree_t1() -> TreeOverlay {
    tree(&[
        ("ireland", "frankfurt"),
        ("london", "frankfurt"),
        ("saopaulo", "frankfurt"),
        ("mumbai", "frankfurt"),
        ("oregon", "saopaulo"),
        ("california", "saopaulo"),
        ("canada", "saopaulo"),
        ("virginia", "saopaulo"),
        ("singapore", "mumbai"),
        ("tokyo", "mumbai"),
        ("sydney", "mumbai"),
    ])
}

/// Four-level tree rooted in ireland: one arm through saopaulo to the
/// Americas, one through london and mumbai to the rest.
pub fn tree_t2() -> TreeOverlay {
    tree(&[
        ("saopaulo", "ireland"),
        ("london", "ireland"),
        ("oregon", "saopaulo"),
        ("california", "saopaulo"),
        ("canada", "saopaulo"),
        ("virginia", "saopaulo"),
        ("frankfurt", "london"),
        ("mumbai", "london"),
        ("singapore", "mumbai"),
        ("tokyo", "mumbai"),
        ("sydney", "mumbai"),
    ])
}

/// Star: every region hangs directly off ireland.
pub fn tree_t3() -> TreeOverlay {
    let all = names();
    let edges: Vec<(String, String)> = all
        .iter()
        .filter(|n| n.as_str() != "ireland")
        .map(|n| (n.clone(), "ireland".to_string()))
        .collect();
    TreeOverlay::new(all, &edges).expect("preset tree is well-formed")
}
