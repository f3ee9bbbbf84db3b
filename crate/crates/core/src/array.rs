//! MIMO antenna layout and the virtual array it synthesizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Antenna position in half-wavelength units (x = right, z = up).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElementPos {
    pub x: i32,
    pub z: i32,
}

impl ElementPos {
    pub const fn new(x: i32, z: i32) -> Self {
        Self { x, z }
    }
}

/// One Tx-Rx pair acting as an antenna at the sum of both positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VirtualElement {
    pub pos: ElementPos,
    pub tx: usize,
    pub rx: usize,
}

/// Two virtual elements at the same position fed by different transmitters.
/// `first` fires before `second` in the TDMA sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlappedPair {
    pub first: usize,
    pub second: usize,
    /// Number of TDMA slots between the two transmitters.
    pub tx_delta: usize,
}

/// Transmit/receive layout. Transmitters fire in list order; virtual channel
/// `tx * n_rx + rx` is the pair (`tx_pos[tx]`, `rx_pos[rx]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArrayLayout", into = "ArrayLayout")]
pub struct ArrayGeometry {
    tx_pos: Vec<ElementPos>,
    rx_pos: Vec<ElementPos>,
    virtual_elements: Vec<VirtualElement>,
    overlapped: Vec<OverlappedPair>,
}

#[derive(Serialize, Deserialize)]
struct ArrayLayout {
    tx_pos: Vec<ElementPos>,
    rx_pos: Vec<ElementPos>,
}

impl TryFrom<ArrayLayout> for ArrayGeometry {
    type Error = Error;

    fn try_from(layout: ArrayLayout) -> Result<Self> {
        ArrayGeometry::new(layout.tx_pos, layout.rx_pos)
    }
}

impl From<ArrayGeometry> for ArrayLayout {
    fn from(geom: ArrayGeometry) -> Self {
        ArrayLayout { tx_pos: geom.tx_pos, rx_pos: geom.rx_pos }
    }
}

impl ArrayGeometry {
    pub fn new(tx_pos: Vec<ElementPos>, rx_pos: Vec<ElementPos>) -> Result<Self> {
        if tx_pos.is_empty() || rx_pos.is_empty() {
            return Err(Error::Config("array needs at least one Tx and one Rx".into()));
        }
        let n_rx = rx_pos.len();
        let mut virtual_elements = Vec::with_capacity(tx_pos.len() * n_rx);
        for (tx, t) in tx_pos.iter().enumerate() {
            for (rx, r) in rx_pos.iter().enumerate() {
                virtual_elements.push(VirtualElement {
                    pos: ElementPos::new(t.x + r.x, t.z + r.z),
                    tx,
                    rx,
                });
            }
        }
        let mut overlapped = Vec::new();
        for i in 0..virtual_elements.len() {
            for j in (i + 1)..virtual_elements.len() {
                let (a, b) = (virtual_elements[i], virtual_elements[j]);
                if a.pos == b.pos && a.tx != b.tx {
                    let (first, second) = if a.tx < b.tx { (i, j) } else { (j, i) };
                    overlapped.push(OverlappedPair {
                        first,
                        second,
                        tx_delta: a.tx.abs_diff(b.tx),
                    });
                }
            }
        }
        Ok(Self { tx_pos, rx_pos, virtual_elements, overlapped })
    }

    /// Layout of the 12 Tx / 16 Rx cascaded evaluation board: the nine
    /// bottom-row transmitters and the receivers form an 86-element dense
    /// azimuth row, three raised transmitters add sparse elevation rows.
    pub fn cascade_12x16() -> Self {
        let tx_x = [11, 10, 9, 32, 28, 24, 20, 16, 12, 8, 4, 0];
        let tx_z = [6, 4, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0];
        let rx_x = [11, 12, 13, 14, 50, 51, 52, 53, 46, 47, 48, 49, 0, 1, 2, 3];
        let tx = tx_x.iter().zip(tx_z).map(|(&x, z)| ElementPos::new(x, z)).collect();
        let rx = rx_x.iter().map(|&x| ElementPos::new(x, 0)).collect();
        Self::new(tx, rx).expect("static layout is valid")
    }

    /// Single transmitter with `n_rx` receivers at half-wavelength spacing.
    pub fn uniform_linear(n_rx: usize) -> Self {
        let rx = (0..n_rx as i32).map(|x| ElementPos::new(x, 0)).collect();
        Self::new(vec![ElementPos::new(0, 0)], rx).expect("non-empty layout")
    }

    pub fn n_tx(&self) -> usize {
        self.tx_pos.len()
    }

    pub fn n_rx(&self) -> usize {
        self.rx_pos.len()
    }

    pub fn n_virtual(&self) -> usize {
        self.virtual_elements.len()
    }

    pub fn tx_positions(&self) -> &[ElementPos] {
        &self.tx_pos
    }

    pub fn rx_positions(&self) -> &[ElementPos] {
        &self.rx_pos
    }

    pub fn virtual_elements(&self) -> &[VirtualElement] {
        &self.virtual_elements
    }

    pub fn overlapped_pairs(&self) -> &[OverlappedPair] {
        &self.overlapped
    }

    /// Distinct x positions among virtual elements in the z = 0 row, sorted.
    pub fn azimuth_row(&self) -> Vec<i32> {
        let mut xs: Vec<i32> =
            self.virtual_elements.iter().filter(|v| v.pos.z == 0).map(|v| v.pos.x).collect();
        xs.sort_unstable();
        xs.dedup();
        xs
    }

    /// Inclusive (min, max) of virtual x and z positions.
    pub fn extent(&self) -> (ElementPos, ElementPos) {
        let mut lo = ElementPos::new(i32::MAX, i32::MAX);
        let mut hi = ElementPos::new(i32::MIN, i32::MIN);
        for v in &self.virtual_elements {
            lo.x = lo.x.min(v.pos.x);
            lo.z = lo.z.min(v.pos.z);
            hi.x = hi.x.max(v.pos.x);
            hi.z = hi.z.max(v.pos.z);
        }
        (lo, hi)
    }

    pub fn check_tx_count(&self, n_tx: usize, n_rx: usize) -> Result<()> {
        if self.n_tx() != n_tx || self.n_rx() != n_rx {
            return Err(Error::Config(format!(
                "array has {}x{} Tx/Rx but waveform expects {n_tx}x{n_rx}",
                self.n_tx(),
                self.n_rx()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cascade_virtual_array() {
        let g = ArrayGeometry::cascade_12x16();
        assert_eq!(g.n_virtual(), 12 * 16);
        let row = g.azimuth_row();
        assert_eq!(row.len(), 86);
        assert_eq!(row, (0..86).collect::<Vec<_>>());
        let (lo, hi) = g.extent();
        assert_eq!((lo.z, hi.z), (0, 6));
    }

    #[test]
    fn overlapped_pairs_share_position() {
        let g = ArrayGeometry::cascade_12x16();
        assert!(!g.overlapped_pairs().is_empty());
        assert!(g.overlapped_pairs().iter().any(|p| p.tx_delta == 1));
        for p in g.overlapped_pairs() {
            let a = g.virtual_elements()[p.first];
            let b = g.virtual_elements()[p.second];
            assert_eq!(a.pos, b.pos);
            assert!(a.tx < b.tx);
            assert_eq!(b.tx - a.tx, p.tx_delta);
        }
    }

    #[test]
    fn single_tx_has_no_overlaps() {
        let g = ArrayGeometry::uniform_linear(8);
        assert!(g.overlapped_pairs().is_empty());
        assert_eq!(g.azimuth_row().len(), 8);
    }

    #[test]
    fn serde_round_trip_rebuilds_derived_fields() {
        let g = ArrayGeometry::cascade_12x16();
        let json = serde_json_like(&g);
        assert_eq!(json.n_virtual(), g.n_virtual());
        assert_eq!(json.overlapped_pairs().len(), g.overlapped_pairs().len());
    }

    fn serde_json_like(g: &ArrayGeometry) -> ArrayGeometry {
        let layout: ArrayLayout = g.clone().into();
        ArrayGeometry::try_from(layout).unwrap()
    }
}
