/* Review flow orchestration shared by the app shell and the test suite. */

import { ApiClient, StaleRevisionError } from "./api.js";
import type { SubmitResult } from "./api.js";
import { ClusterPageModel } from "./models.js";

export type SubmitOutcome =
  | { kind: "submitted"; result: SubmitResult }
  | { kind: "stale"; message: string }
  | { kind: "failed"; message: string };

/** Submit a cluster page all-or-nothing.
 *
 * A 409 means the page was built against an old revision: the caller must
 * reload the task and let the reviewer reapply their decisions — nothing
 * was persisted. Network errors surface as retryable failures; the
 * revision guard makes an accidental double submit a 409, not a dupe.
 */
export async function submitReview(
  client: ApiClient,
  page: ClusterPageModel,
): Promise<SubmitOutcome> {
  let body;
  try {
    body = page.payload();
  } catch (err) {
    return { kind: "failed", message: (err as Error).message };
  }
  try {
    const result = await client.submitTask(page.taskId, body);
    return { kind: "submitted", result };
  } catch (err) {
    if (err instanceof StaleRevisionError) {
      return { kind: "stale", message: err.message };
    }
    return { kind: "failed", message: (err as Error).message };
  }
}

/** Load the next pending cluster as a page model, or null when done. */
export async function nextPendingPage(
  client: ApiClient,
  pageSize = 120,
): Promise<ClusterPageModel | null> {
  const listing = await client.listTasks("PENDING", 0, 1);
  if (!listing.tasks.length) return null;
  return new ClusterPageModel(listing.tasks[0], listing.revision, pageSize);
}
