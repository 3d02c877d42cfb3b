/** Hash router: all state beyond pending edits lives in the URL, so a
 * refresh reproduces the view. */

import { Api } from "./api";
import {
  renderCourses,
  renderGaps,
  renderGrid,
  renderStudentHome,
  renderUserReport,
  toast,
} from "./views";

export async function route(root: HTMLElement, api: Api, hash: string): Promise<void> {
  const parts = hash.replace(/^#\/?/, "").split("/").filter(Boolean);
  try {
    if (parts.length === 0) {
      await renderCourses(root, api);
    } else if (parts[0] === "course" && parts.length === 2) {
      await renderGrid(root, api, decodeURIComponent(parts[1]));
    } else if (parts[0] === "course" && parts[2] === "student" && parts.length === 4) {
      await renderUserReport(root, api, decodeURIComponent(parts[1]), decodeURIComponent(parts[3]));
    } else if (parts[0] === "course" && parts[2] === "gaps" && parts.length === 4) {
      await renderGaps(root, api, decodeURIComponent(parts[1]), decodeURIComponent(parts[3]));
    } else if (parts[0] === "student" && parts.length === 2) {
      await renderStudentHome(root, api, decodeURIComponent(parts[1]));
    } else if (parts[0] === "student" && parts[2] === "course" && parts.length === 4) {
      await renderUserReport(root, api, decodeURIComponent(parts[3]), decodeURIComponent(parts[1]), true);
    } else {
      root.replaceChildren(document.createTextNode("Not found."));
    }
  } catch (error) {
    const message = error instanceof Error ? error.message : String(error);
    toast(`load failed: ${message}`);
    root.replaceChildren(document.createTextNode(`Could not load this view: ${message}`));
  }
}

export function startRouter(root: HTMLElement, api: Api): void {
  const rerender = () => void route(root, api, location.hash);
  window.addEventListener("hashchange", rerender);
  rerender();
}
