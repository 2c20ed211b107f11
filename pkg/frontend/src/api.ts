/* Typed client for the campaign review service. The UI never computes a
 * label locally: every mutation is one of these documented calls. */

export interface StatusDoc {
  name: string;
  iteration: number;
  train_size: number;
  pool_size: number;
  test_size: number;
  pending_tasks: number;
  revision: number;
  metrics_latest: Record<string, number>;
  round_in_flight: number | null;
  busy: boolean;
  complete: boolean;
}

export interface TaskMember {
  item_id: string;
  thumbnail: string | null;
}

export interface TaskDoc {
  task_id: string;
  iteration: number;
  status: "PENDING" | "SUBMITTED";
  suggested_label: string | null;
  members: TaskMember[];
  size: number;
}

export interface TaskListDoc {
  tasks: TaskDoc[];
  total: number;
  page: number;
  page_size: number;
  revision: number;
}

export interface SubmitBody {
  label: string;
  misclustered: string[];
  item_labels: Record<string, string>;
  revision: number;
}

export interface SubmitResult {
  task: TaskDoc;
  revision: number;
  pending: number;
}

export interface IterateResult {
  accepted: boolean;
  complete: boolean;
  iteration: number | null;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export class StaleRevisionError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

async function errorMessage(response: Response): Promise<string> {
  try {
    const doc = await response.json();
    if (doc && typeof doc.error === "string") return doc.error;
  } catch {
    /* non-JSON error body */
  }
  return `request failed with status ${response.status}`;
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await fetch(this.baseUrl + path);
    if (!response.ok) {
      throw new ApiError(response.status, await errorMessage(response));
    }
    return (await response.json()) as T;
  }

  getStatus(): Promise<StatusDoc> {
    return this.getJson<StatusDoc>("/api/status");
  }

  listTasks(
    status: "PENDING" | "SUBMITTED" = "PENDING",
    page = 0,
    pageSize = 50,
  ): Promise<TaskListDoc> {
    const query = `status=${status}&page=${page}&page_size=${pageSize}`;
    return this.getJson<TaskListDoc>(`/api/tasks?${query}`);
  }

  async submitTask(taskId: string, body: SubmitBody): Promise<SubmitResult> {
    const response = await fetch(
      `${this.baseUrl}/api/tasks/${encodeURIComponent(taskId)}/submit`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      },
    );
    if (response.status === 409) {
      throw new StaleRevisionError(await errorMessage(response));
    }
    if (!response.ok) {
      throw new ApiError(response.status, await errorMessage(response));
    }
    return (await response.json()) as SubmitResult;
  }

  async iterate(): Promise<IterateResult> {
    const response = await fetch(`${this.baseUrl}/api/iterate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: "{}",
    });
    if (response.status === 409) {
      throw new StaleRevisionError(await errorMessage(response));
    }
    if (!response.ok) {
      throw new ApiError(response.status, await errorMessage(response));
    }
    const doc = await response.json();
    return {
      accepted: response.status === 202,
      complete: Boolean(doc.complete),
      iteration: typeof doc.iteration === "number" ? doc.iteration : null,
    };
  }

  thumbnailUrl(itemId: string): string {
    return `${this.baseUrl}/api/items/${encodeURIComponent(itemId)}/thumbnail`;
  }
}
