/** Wire types mirroring the annotation service API. */

export type BBox = [number, number, number, number]; // x1, y1, x2, y2

export interface AttributeValue {
  attribute: string;
  value: string;
}

export interface InstanceEntry {
  id: string;
  category: string;
  bbox: BBox;
  attributes: AttributeValue[];
  mask_ref?: string;
}

export interface ClusterEntry {
  id: string;
  category: string;
  member_ids: string[];
}

export interface RegionEntry {
  id: string;
  bbox: BBox;
  label?: string;
}

export interface RelationshipEntry {
  id: string;
  subject: string;
  predicate: string;
  object: string;
}

export interface AnnotationDoc {
  image: { image_id: string; width: number; height: number; file_name: string };
  instances: InstanceEntry[];
  clusters: ClusterEntry[];
  regions: RegionEntry[];
  relationships: RelationshipEntry[];
}

export interface Candidate {
  predicate: string;
  score: number;
  source: "prior" | "rule";
}

export interface RecommendResponse {
  subject_ref: string;
  object_ref: string;
  recommendations: Candidate[];
}

export interface GraphNode {
  id: string;
  kind: "instance" | "cluster";
  category: string;
  bbox: BBox;
  attributes?: AttributeValue[];
  member_ids?: string[];
}

export interface GraphEdge {
  id: string;
  subject: string;
  predicate: string;
  object: string;
}

export interface SceneGraph {
  image_id: string;
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface ImageSummary {
  image_id: string;
  annotated: boolean;
  instances: number;
  clusters: number;
  regions: number;
  relationships: number;
}

export interface ProjectConfig {
  object_categories: string[];
  predicates: string[];
  attributes: Record<string, string[]>;
}
