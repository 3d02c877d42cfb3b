/**
 * Typed client for the /api/v1 service. The UI computes nothing itself:
 * every displayed number comes from these endpoints.
 */

export type Rating = number | null;

export interface Student {
  id: string;
  surname: string;
  first_name: string;
  email: string;
}

export interface GraderColumn {
  id: string;
  title: string;
}

export interface GraderRow {
  student: Student;
  cells: Rating[];
  course_total: Rating;
}

export interface GraderReport {
  course_id: string;
  course_name: string;
  columns: GraderColumn[];
  rows: GraderRow[];
  footer: Rating[];
  footer_raw: (number | null)[];
}

export interface UserReportRow {
  title: string;
  grade: Rating;
  range: string;
  feedback: string;
}

export interface UserReport {
  student: Student;
  course_id: string;
  course_name: string;
  aggregate: Rating;
  rows: UserReportRow[];
}

export interface Course {
  id: string;
  full_name: string;
  short_name: string;
  level: string;
  competency_ids: string[];
  roster: string[];
}

export interface GapAnalysis {
  competency_id: string;
  studied: string[];
  unstudied: string[];
  include_in_curriculum: boolean;
}

export interface Checklist {
  student_id: string;
  level: string;
  threshold: number;
  missing: { id: string; title: string }[];
  complete: boolean;
}

export interface MergeSummary {
  students_added: number;
  assessments_added: number;
  assessments_skipped: number;
  competencies_added: number;
}

export interface ImportResult {
  course_id: string;
  summary: MergeSummary | null;
}

export class ApiError extends Error {
  constructor(
    public code: string,
    message: string,
    public status: number,
  ) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class Api {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = globalThis.fetch.bind(globalThis),
  ) {}

  private async request<T>(method: string, path: string, init: RequestInit = {}): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}/api/v1${path}`, { method, ...init });
    if (!response.ok) {
      let code = "http.error";
      let message = `HTTP ${response.status}`;
      try {
        const body = (await response.json()) as { code?: string; message?: string };
        if (body.code) code = body.code;
        if (body.message) message = body.message;
      } catch {
        // non-JSON error body: keep the generic code
      }
      throw new ApiError(code, message, response.status);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string; courses: number }> {
    return this.request("GET", "/health");
  }

  courses(): Promise<Course[]> {
    return this.request("GET", "/courses");
  }

  students(): Promise<Student[]> {
    return this.request("GET", "/students");
  }

  graderReport(courseId: string): Promise<GraderReport> {
    return this.request("GET", `/courses/${encodeURIComponent(courseId)}/grader-report`);
  }

  userReport(courseId: string, studentId: string): Promise<UserReport> {
    return this.request(
      "GET",
      `/courses/${encodeURIComponent(courseId)}/students/${encodeURIComponent(studentId)}/user-report`,
    );
  }

  gaps(courseId: string, competencyId: string): Promise<GapAnalysis> {
    return this.request(
      "GET",
      `/courses/${encodeURIComponent(courseId)}/gaps/${encodeURIComponent(competencyId)}`,
    );
  }

  checklist(studentId: string, level: string, threshold?: number): Promise<Checklist> {
    const query = threshold === undefined ? "" : `?threshold=${threshold}`;
    return this.request(
      "GET",
      `/students/${encodeURIComponent(studentId)}/checklist/${encodeURIComponent(level)}${query}`,
    );
  }

  grade(body: {
    student: string;
    competency: string;
    score: number;
    feedback?: string;
  }): Promise<{ current_rating: Rating }> {
    return this.request("PUT", "/grades", {
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  importArchive(file: Blob, destination: string, name?: string): Promise<ImportResult> {
    const form = new FormData();
    form.append("file", file, "upload.ctar");
    form.append("destination", destination);
    if (name) form.append("name", name);
    return this.request("POST", "/import", { body: form });
  }

  exportUrl(courseId: string, studentId?: string): string {
    const base = `${this.baseUrl}/api/v1/courses/${encodeURIComponent(courseId)}/export`;
    return studentId ? `${base}/${encodeURIComponent(studentId)}` : base;
  }
}

export function formatRating(rating: Rating): string {
  return rating === null ? "-" : String(rating);
}

export function fullName(student: Student): string {
  return `${student.first_name} ${student.surname}`.trim();
}
