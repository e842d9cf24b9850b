/**
 * Keyboard routing: a pure map from key names to card-list actions so the
 * bindings are testable without a DOM.
 */

export type KeyAction =
  | { type: "next" }
  | { type: "prev" }
  | { type: "pick"; rank: number }
  | { type: "bachelor" };

export function routeKey(key: string): KeyAction | null {
  switch (key) {
    case "ArrowDown":
    case "j":
      return { type: "next" };
    case "ArrowUp":
    case "k":
      return { type: "prev" };
    case "b":
    case "B":
      return { type: "bachelor" };
    case "0":
      return { type: "pick", rank: 10 };
    default:
      if (key.length === 1 && key >= "1" && key <= "9") {
        return { type: "pick", rank: Number(key) };
      }
      return null;
  }
}
