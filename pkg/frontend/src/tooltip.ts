/**
 * Hover hints: any element (or ancestor) carrying [data-tip] shows its text
 * in a floating div. Used for the grid's identity mouse-over and for
 * untruncated competency titles on header cells.
 */

const TIP_ID = "ct-tooltip";

export function installTooltip(doc: Document = document): void {
  if (doc.getElementById(TIP_ID)) return;
  const tip = doc.createElement("div");
  tip.id = TIP_ID;
  tip.className = "tooltip";
  tip.style.display = "none";
  doc.body.appendChild(tip);

  doc.addEventListener("mouseover", (event) => {
    const target = event.target;
    if (!(target instanceof Element)) return;
    const source = target.closest("[data-tip]");
    if (!source) return;
    const text = source.getAttribute("data-tip");
    if (!text) return;
    tip.textContent = text;
    tip.style.display = "block";
    const rect = source.getBoundingClientRect();
    tip.style.top = `${rect.bottom + 6 + (doc.defaultView?.scrollY ?? 0)}px`;
    tip.style.left = `${rect.left + (doc.defaultView?.scrollX ?? 0)}px`;
  });

  doc.addEventListener("mouseout", () => {
    tip.style.display = "none";
  });
}

export function tooltipText(doc: Document = document): string | null {
  const tip = doc.getElementById(TIP_ID);
  if (!tip || tip.style.display === "none") return null;
  return tip.textContent;
}
