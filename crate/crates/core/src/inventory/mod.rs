//! Road inventory: route references, linearly referenced segments, mile
//! markers, and the persisted geohash tile index.

mod index;
mod input;
mod route;
mod segment;
mod store;

pub use index::{
    build_index, GeohashTile, RouteLine, TiledIndex, DEFAULT_INDEX_PRECISION, MAX_INDEX_PRECISION,
    MIN_INDEX_PRECISION,
};
pub use input::{read_inventory, read_inventory_from, read_markers, read_markers_from};
pub use route::{road_name_to_type, RoadClass, RouteRef};
pub use segment::{MileMarker, PostRange, RoadSegment};
pub use store::{read_tile, write_tiles, WriteSummary, MARKER_DIR, META_FILE, SEGMENTS_FILE};
