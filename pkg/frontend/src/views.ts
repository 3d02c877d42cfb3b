/**
 * DOM views: course list with the import dialog, the grading grid, the
 * per-student user report (with the level checklist badge), and the gap view.
 *
 * Rendering rule: every number shown is fetched from the service; after a
 * grade saves, the affected cell, row total, and column footer are repainted
 * from a fresh grader report, never recomputed here.
 */

import {
  Api,
  ApiError,
  formatRating,
  fullName,
  type Course,
  type Rating,
  type Student,
} from "./api";
import { GridViewModel } from "./grid";

type Attrs = Record<string, string | ((event: Event) => void)>;

export function h(tag: string, attrs: Attrs = {}, ...children: (Node | string)[]): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === "function") {
      node.addEventListener(key.replace(/^on/, ""), value);
    } else {
      node.setAttribute(key, value);
    }
  }
  node.append(...children);
  return node;
}

export function toast(message: string, kind: "error" | "info" = "error"): void {
  const note = h("div", { class: `toast ${kind}` }, message);
  document.body.appendChild(note);
  setTimeout(() => note.remove(), 4000);
}

function truncate(text: string, max = 24): string {
  return text.length <= max ? text : `${text.slice(0, max - 1)}…`;
}

function link(href: string, label: string, cls = ""): HTMLElement {
  return h("a", { href, class: cls }, label);
}

// --------------------------------------------------------------- course list

export async function renderCourses(root: HTMLElement, api: Api): Promise<void> {
  const courses = await api.courses();
  const list = h("table", { class: "courses" });
  list.appendChild(
    h(
      "tr",
      {},
      h("th", {}, "Short name"),
      h("th", {}, "Full name"),
      h("th", {}, "Level"),
      h("th", {}, "Students"),
      h("th", {}, ""),
    ),
  );
  for (const course of courses) {
    list.appendChild(
      h(
        "tr",
        {},
        h("td", {}, link(`#/course/${course.id}`, course.short_name)),
        h("td", {}, course.full_name),
        h("td", {}, course.level),
        h("td", {}, String(course.roster.length)),
        h("td", {}, h("a", { href: api.exportUrl(course.id), download: "" }, "export")),
      ),
    );
  }
  root.replaceChildren(
    h("h1", {}, "Courses"),
    courses.length ? list : h("p", {}, "No courses yet."),
    renderImportDialog(api, courses, () => renderCourses(root, api)),
  );
}

// ------------------------------------------------------------- import dialog

export function renderImportDialog(api: Api, courses: Course[], onDone: () => void): HTMLElement {
  const fileInput = h("input", { type: "file", accept: ".ctar", name: "archive" }) as HTMLInputElement;
  const nameInput = h("input", {
    type: "text",
    name: "new-name",
    placeholder: "optional full name",
  }) as HTMLInputElement;
  const coursePicker = h("select", { name: "target-course" }) as HTMLSelectElement;
  for (const course of courses) {
    coursePicker.appendChild(h("option", { value: course.id }, `${course.short_name} (${course.level})`));
  }
  const result = h("div", { class: "import-result" });

  const destinations: { value: string; label: string }[] = [
    { value: "new", label: "Restore as a new course" },
    { value: "merge", label: "Merge the archive into an existing course" },
    { value: "replace", label: "Delete the contents of the existing course and then restore" },
  ];
  let selected = "new";
  const radios = destinations.map(({ value, label }) => {
    const input = h("input", {
      type: "radio",
      name: "destination",
      value,
      onchange: () => {
        selected = value;
        nameInput.disabled = value !== "new";
        coursePicker.disabled = value === "new";
      },
    }) as HTMLInputElement;
    if (value === "new") input.checked = true;
    return h("label", { class: "destination" }, input, ` ${label}`);
  });
  coursePicker.disabled = true;

  const submit = h("button", {
    type: "button",
    class: "import-submit",
    onclick: async () => {
      const file = fileInput.files?.[0];
      if (!file) {
        toast("choose a .ctar file first");
        return;
      }
      const destination = selected === "new" ? "new" : `${selected}:${coursePicker.value}`;
      try {
        const outcome = await api.importArchive(file, destination, nameInput.value || undefined);
        if (outcome.summary) {
          const s = outcome.summary;
          result.replaceChildren(
            h(
              "p",
              { class: "merge-summary" },
              `Merged into ${outcome.course_id}: ${s.students_added} students added, ` +
                `${s.assessments_added} assessments added, ${s.assessments_skipped} skipped, ` +
                `${s.competencies_added} competencies added.`,
            ),
          );
        } else {
          result.replaceChildren(h("p", {}, `Imported into course ${outcome.course_id}.`));
        }
        onDone();
      } catch (error) {
        const code = error instanceof ApiError ? error.code : "http.error";
        toast(`import failed: ${code}`);
      }
    },
  }, "Import");

  return h(
    "section",
    { class: "import-dialog" },
    h("h2", {}, "Import a record archive"),
    h("p", {}, fileInput),
    ...radios.map((r) => h("p", {}, r)),
    h("p", {}, "Into: ", coursePicker),
    h("p", {}, "New course name: ", nameInput),
    h("p", {}, submit),
    result,
  );
}

// -------------------------------------------------------------- grading grid

const SCORES = [1, 2, 3, 4, 5];

export interface GridController {
  vm: GridViewModel;
  /** Resolves when the triggered save (and repaint) completed. */
  pendingSave: Promise<void> | null;
}

export async function renderGrid(root: HTMLElement, api: Api, courseId: string): Promise<GridController> {
  const report = await api.graderReport(courseId);
  const vm = new GridViewModel(report);
  const controller: GridController = { vm, pendingSave: null };

  const table = h("table", { class: "grader" });
  const headRow = h("tr", {}, h("th", { class: "student-col" }, "Student"));
  for (const column of vm.columns) {
    headRow.appendChild(
      h(
        "th",
        { "data-tip": column.title, "data-column": column.id },
        truncate(column.title),
        h("br", {}),
        link(`#/course/${courseId}/gaps/${column.id}`, "gaps", "gap-link"),
      ),
    );
  }
  headRow.appendChild(h("th", {}, "Course total"));
  table.appendChild(h("thead", {}, headRow));

  const body = h("tbody", {});
  for (const row of vm.rows) {
    const tr = h("tr", { "data-student": row.student.id });
    tr.appendChild(
      h(
        "td",
        { class: "student-col" },
        link(`#/course/${courseId}/student/${row.student.id}`, `${row.student.surname}, ${row.student.first_name}`),
      ),
    );
    for (const column of vm.columns) {
      tr.appendChild(renderCell(api, courseId, vm, controller, row.student, column.id));
    }
    tr.appendChild(
      h("td", { class: "row-total", "data-total": row.student.id }, formatRating(row.course_total)),
    );
    body.appendChild(tr);
  }
  table.appendChild(body);

  const footRow = h("tr", {}, h("td", { class: "student-col" }, "Overall average"));
  for (const column of vm.columns) {
    footRow.appendChild(h("td", { "data-footer": column.id }, formatRating(vm.footer(column.id))));
  }
  footRow.appendChild(h("td", {}, ""));
  table.appendChild(h("tfoot", {}, footRow));

  root.replaceChildren(
    h("h1", {}, report.course_name),
    h("p", {}, link("#/", "← courses"), " · ", h("a", { href: api.exportUrl(courseId), download: "" }, "export course")),
    table,
  );
  return controller;
}

function cellTip(student: Student, title: string, rating: Rating): string {
  return `${fullName(student)} ${title}, ${formatRating(rating)}`;
}

function renderCell(
  api: Api,
  courseId: string,
  vm: GridViewModel,
  controller: GridController,
  student: Student,
  competencyId: string,
): HTMLElement {
  const column = vm.columns.find((c) => c.id === competencyId)!;
  const select = h("select", { class: "rating" }) as HTMLSelectElement;
  const placeholder = h("option", { value: "" }, "-") as HTMLOptionElement;
  placeholder.disabled = true; // history is append-only: no path back to unrecorded
  select.appendChild(placeholder);
  for (const score of SCORES) {
    select.appendChild(h("option", { value: String(score) }, String(score)));
  }

  const td = h("td", { class: "cell", "data-cell": `${student.id}:${competencyId}` }, select);

  const paint = () => {
    const rating = vm.displayedRating(student.id, competencyId);
    select.value = rating === null ? "" : String(rating);
    td.classList.toggle("dirty", vm.isDirty(student.id, competencyId));
    td.setAttribute("data-tip", cellTip(student, column.title, rating));
  };
  paint();

  select.addEventListener("change", () => {
    const score = Number(select.value);
    if (!score) return;
    vm.beginEdit(student.id, competencyId, score);
    paint();
    controller.pendingSave = (async () => {
      try {
        await api.grade({ student: student.id, competency: competencyId, score });
        vm.applyServer(await api.graderReport(courseId));
      } catch (error) {
        const code = error instanceof ApiError ? error.code : "http.error";
        toast(`save failed: ${code}`);
      } finally {
        // settle either way: on success the fresh report carries the value,
        // on failure the cell falls back to the old server state (revert)
        vm.settle(student.id, competencyId);
        paint();
        repaintAggregates(vm, td.closest("table"));
      }
    })();
  });

  return td;
}

function repaintAggregates(vm: GridViewModel, table: HTMLElement | null): void {
  if (!table) return;
  for (const cell of table.querySelectorAll<HTMLElement>("td[data-total]")) {
    cell.textContent = formatRating(vm.rowTotal(cell.getAttribute("data-total")!));
  }
  for (const cell of table.querySelectorAll<HTMLElement>("td[data-footer]")) {
    cell.textContent = formatRating(vm.footer(cell.getAttribute("data-footer")!));
  }
}

// --------------------------------------------------------------- user report

export async function renderUserReport(
  root: HTMLElement,
  api: Api,
  courseId: string,
  studentId: string,
  readonly = false,
): Promise<void> {
  const [report, courses] = await Promise.all([api.userReport(courseId, studentId), api.courses()]);
  const level = courses.find((c) => c.id === courseId)?.level;

  let badge: HTMLElement = h("span", {});
  if (level) {
    const checklist = await api.checklist(studentId, level);
    badge = h(
      "span",
      { class: `badge ${checklist.complete ? "complete" : "incomplete"}` },
      checklist.complete ? `${level} complete` : `${level}: ${checklist.missing.length} missing`,
    );
  }

  const table = h("table", { class: "user-report" });
  table.appendChild(
    h(
      "tr",
      {},
      h("th", {}, "Grade item"),
      h("th", {}, "Grade"),
      h("th", {}, "Range"),
      h("th", {}, "Feedback"),
    ),
  );
  table.appendChild(
    h(
      "tr",
      { class: "aggregate" },
      h("td", {}, report.course_name),
      h("td", {}, formatRating(report.aggregate)),
      h("td", {}, ""),
      h("td", {}, ""),
    ),
  );
  for (const row of report.rows) {
    table.appendChild(
      h(
        "tr",
        {},
        h("td", {}, row.title),
        h("td", { class: "grade" }, formatRating(row.grade)),
        h("td", {}, row.range),
        h("td", {}, row.feedback),
      ),
    );
  }

  const back = readonly ? link(`#/student/${studentId}`, "← my courses") : link(`#/course/${courseId}`, "← grid");
  root.replaceChildren(
    h("h1", {}, `User report - ${fullName(report.student)}`),
    h("p", {}, back, " ", badge),
    table,
  );
}

// ------------------------------------------------------------------ gap view

export async function renderGaps(
  root: HTMLElement,
  api: Api,
  courseId: string,
  competencyId: string,
): Promise<void> {
  const [gaps, students, report] = await Promise.all([
    api.gaps(courseId, competencyId),
    api.students(),
    api.graderReport(courseId),
  ]);
  const byId = new Map(students.map((s) => [s.id, s]));
  const title = report.columns.find((c) => c.id === competencyId)?.title ?? competencyId;
  const col = report.columns.findIndex((c) => c.id === competencyId);

  const ratingOf = (sid: string): Rating => {
    const row = report.rows.find((r) => r.student.id === sid);
    return row && col >= 0 ? row.cells[col] : null;
  };
  const item = (sid: string, studied: boolean) => {
    const student = byId.get(sid);
    const label = student ? fullName(student) : sid;
    return h(
      "li",
      { class: studied ? "studied" : "unstudied" },
      `${label}${studied ? ` — ${formatRating(ratingOf(sid))}` : ""}`,
    );
  };

  root.replaceChildren(
    h("h1", {}, `Gap analysis — ${title}`),
    h("p", {}, link(`#/course/${courseId}`, "← grid")),
    h(
      "p",
      { class: gaps.include_in_curriculum ? "recommend yes" : "recommend no" },
      gaps.include_in_curriculum
        ? "Include this topic in the class curriculum."
        : "The class has working coverage of this topic.",
    ),
    h("h2", {}, `Studied (${gaps.studied.length})`),
    h("ul", { class: "studied-list" }, ...gaps.studied.map((sid) => item(sid, true))),
    h("h2", {}, `Not studied (${gaps.unstudied.length})`),
    h("ul", { class: "unstudied-list" }, ...gaps.unstudied.map((sid) => item(sid, false))),
  );
}

// ----------------------------------------------------- student-facing routes

export async function renderStudentHome(root: HTMLElement, api: Api, studentId: string): Promise<void> {
  const courses = await api.courses();
  const mine = courses.filter((c) => c.roster.includes(studentId));
  root.replaceChildren(
    h("h1", {}, "My courses"),
    mine.length
      ? h(
          "ul",
          {},
          ...mine.map((c) =>
            h("li", {}, link(`#/student/${studentId}/course/${c.id}`, `${c.full_name} (${c.level})`)),
          ),
        )
      : h("p", {}, "Not enrolled in any course."),
  );
}
