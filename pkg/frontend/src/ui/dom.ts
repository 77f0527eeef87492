// small DOM builders; no framework

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

export function labelled(text: string, input: HTMLElement): HTMLLabelElement {
  return el("label", { class: "field" }, [el("span", {}, [text]), input]);
}

export function statusLine(parent: HTMLElement): (text: string, tone?: "ok" | "err" | "info") => void {
  const line = el("p", { class: "status", role: "status" });
  parent.append(line);
  return (text, tone = "info") => {
    line.textContent = text;
    line.className = `status ${tone}`;
  };
}
