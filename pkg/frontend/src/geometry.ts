// Catheter drawing geometry: the same constant-curvature chain the server
// simulates, reproduced client-side purely to draw the backbone from the
// streamed pressure commands.  All displayed numbers come from server
// events; this module only produces polylines.

export type Quad = [number, number, number]; // a*q^2 + b*q + c

export interface DrawParams {
  h1: number;
  h2: number;
  h3: number;
  theta1_map: Quad;
  len1_map: Quad;
  theta2_map: Quad;
  len2_map: Quad;
  coupling: number;
  u_min: number;
  u_max: number;
}

export interface Pt {
  x: number;
  y: number;
}

export function quad(c: Quad, q: number): number {
  return (c[0] * q + c[1]) * q + c[2];
}

export interface Joints {
  th1: number;
  th2: number;
  l1: number;
  l2: number;
}

export function jointParams(draw: DrawParams, u1: number, u2: number): Joints {
  return {
    th1: quad(draw.theta1_map, u1) + draw.coupling * quad(draw.theta2_map, u2),
    th2: quad(draw.theta2_map, u2) + draw.coupling * quad(draw.theta1_map, u1),
    l1: quad(draw.len1_map, u1),
    l2: quad(draw.len2_map, u2),
  };
}

function arcPoint(length: number, theta: number, frac: number): Pt {
  const phi = theta * frac;
  if (Math.abs(theta) < 1e-9) {
    return { x: 0, y: length * frac };
  }
  const r = length / theta;
  return { x: r * (1 - Math.cos(phi)), y: r * Math.sin(phi) };
}

/** Backbone polyline in workspace millimeters, base at (stage, 0). */
export function backbone(
  draw: DrawParams,
  u1: number,
  u2: number,
  stage = 0,
  perSegment = 12,
): Pt[] {
  const j = jointParams(draw, u1, u2);
  const pts: Pt[] = [{ x: stage, y: 0 }];
  let ox = stage;
  let oy = 0;
  let phi = 0; // accumulated clockwise bend
  const sections: Array<{ len: number; th: number }> = [
    { len: draw.h1, th: 0 },
    { len: j.l1, th: j.th1 },
    { len: draw.h2, th: 0 },
    { len: j.l2, th: j.th2 },
    { len: draw.h3, th: 0 },
  ];
  for (const sec of sections) {
    const steps = sec.th === 0 ? 1 : perSegment;
    const c = Math.cos(phi);
    const s = Math.sin(phi);
    for (let k = 1; k <= steps; k++) {
      const local = arcPoint(sec.len, sec.th, k / steps);
      pts.push({ x: ox + c * local.x + s * local.y, y: oy - s * local.x + c * local.y });
    }
    const end = arcPoint(sec.len, sec.th, 1);
    ox = ox + c * end.x + s * end.y;
    oy = oy - s * end.x + c * end.y;
    phi += sec.th;
  }
  return pts;
}

/** Tip pose (x mm, y mm, theta deg) implied by the drawing chain. */
export function tipPose(
  draw: DrawParams,
  u1: number,
  u2: number,
  stage = 0,
): { x: number; y: number; theta: number } {
  const pts = backbone(draw, u1, u2, stage, 2);
  const tip = pts[pts.length - 1];
  const j = jointParams(draw, u1, u2);
  return { x: tip.x, y: tip.y, theta: ((j.th1 + j.th2) * 180) / Math.PI };
}

/** Ray-casting point-in-polygon for the workspace hull. */
export function pointInPolygon(p: Pt, polygon: Array<[number, number]>): boolean {
  let inside = false;
  for (let i = 0, j = polygon.length - 1; i < polygon.length; j = i++) {
    const [xi, yi] = polygon[i];
    const [xj, yj] = polygon[j];
    const crosses =
      yi > p.y !== yj > p.y && p.x < ((xj - xi) * (p.y - yi)) / (yj - yi) + xi;
    if (crosses) inside = !inside;
  }
  return inside;
}
