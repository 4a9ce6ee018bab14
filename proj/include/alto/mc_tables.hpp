#pragma once

namespace alto::mc {

// Classic 256-case marching-cubes lookup tables. kEdgeFlags[c] has bit e set
// when cell-edge e carries an iso-crossing for corner configuration c;
// kTriangleEdges[c] lists triangles as triples of edge indices, -1 terminated.
extern const int kEdgeFlags[256];
extern const int kTriangleEdges[256][16];

}  // namespace alto::mc
