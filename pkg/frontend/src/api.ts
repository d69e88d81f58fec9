/** Typed client for the annotation service endpoints. */

import { Cloud, parseSqnc } from './sqnc.js';

export interface Meta {
  n: number;
  c: number;
  ratio: number;
  class_names: string[];
}

export interface LabelPoint {
  id: number;
  class: number;
}

export interface LabelsResponse {
  points: LabelPoint[];
  revision: number;
}

export class ServiceClient {
  constructor(readonly baseUrl: string) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, init);
    const body = (await resp.json()) as T & { error?: string };
    if (!resp.ok) {
      throw new Error(body.error ?? `${path} failed with ${resp.status}`);
    }
    return body;
  }

  getMeta(): Promise<Meta> {
    return this.json<Meta>('/meta');
  }

  async getReference(): Promise<Cloud> {
    const resp = await fetch(this.baseUrl + '/cloud/reference');
    if (!resp.ok) throw new Error(`reference fetch failed with ${resp.status}`);
    return parseSqnc(await resp.arrayBuffer());
  }

  async getCandidates(): Promise<Cloud> {
    const resp = await fetch(this.baseUrl + '/cloud/candidates');
    if (!resp.ok) throw new Error(`candidates fetch failed with ${resp.status}`);
    return parseSqnc(await resp.arrayBuffer());
  }

  getLabels(): Promise<LabelsResponse> {
    return this.json<LabelsResponse>('/labels');
  }

  postLabels(points: LabelPoint[]): Promise<{ ok: boolean; revision: number }> {
    return this.json('/labels', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ points }),
    });
  }

  commit(): Promise<{ ok: boolean; path: string; count: number }> {
    return this.json('/commit', { method: 'POST', body: '{}' });
  }
}
