package util;

public final class Strings {
    private Strings() {
    }

    public static String repeat(String s, int times) {
        if (times < 0) {
            throw new IllegalArgumentException("negative count");
        }
        StringBuilder sb = new StringBuilder();
        for (int i = 0; i < times; i++) {
            sb.append(s);
        }
        return sb.toString();
    }

    public static char first(String s) {
        if (s.isEmpty()) {
            throw new IndexOutOfBoundsException("empty string");
        }
        return s.charAt(0);
    }
}
